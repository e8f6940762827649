"""The license store of a DRM agent as an observation/transition system.

States are immutable values. Transitions (:func:`install`, :func:`tick`,
:func:`request`) return new states; observers (:func:`usable`,
:func:`color_of`, :func:`lost_rights`) read them. :class:`Session` threads
a state through a sequence of transitions and records the event stream
that the JSON Lines trace format serializes.
"""

from __future__ import annotations

import enum
import json
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from typing import Optional, Union

from .rel import (
    ConstraintState,
    Count,
    FrozenMap,
    Interval,
    License,
    Right,
    eval_constraint,
    governing_nodes,
    permission_holds,
    permission_set,
)

__all__ = [
    "AgentState",
    "Color",
    "Colored",
    "Decision",
    "DuplicateLicenseError",
    "Installed",
    "NotPermitted",
    "Rejected",
    "Requested",
    "Session",
    "Ticked",
    "UndefinedRightError",
    "color_of",
    "dump_trace",
    "init_agent",
    "install",
    "load_trace",
    "lost_rights",
    "request",
    "tick",
    "usable",
]


class Color(str, enum.Enum):
    WHITE = "white"
    BLACK = "black"


class DuplicateLicenseError(ValueError):
    pass


class UndefinedRightError(KeyError):
    pass


class NotPermitted(Exception):
    """No installed license can serve the requested right right now."""

    def __init__(self, right: Right):
        super().__init__(f"no usable license for {right}")
        self.right = right


@dataclass(frozen=True)
class AgentState:
    licenses: tuple = ()
    constraints: ConstraintState = field(default_factory=ConstraintState)
    now: int = 0
    coloring: FrozenMap = field(default_factory=FrozenMap)

    def license(self, lid: str) -> License:
        for lic in self.licenses:
            if lic.id == lid:
                return lic
        raise KeyError(lid)

    @property
    def license_ids(self) -> tuple:
        return tuple(lic.id for lic in self.licenses)

    @property
    def rights(self) -> list:
        """Every right granted by an installed license, sorted."""
        return sorted(self.coloring)

    def permission_set(self) -> frozenset:
        return permission_set(self.licenses, self.constraints, self.now)


@dataclass(frozen=True)
class Decision:
    request: Right
    chosen: str
    at: int
    depleted: bool
    blackened: frozenset
    permission: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "at": self.at,
            "blackened": [r.to_json() for r in sorted(self.blackened)],
            "chosen": self.chosen,
            "depleted": self.depleted,
            "permission": self.permission,
            "request": self.request.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Decision":
        return cls(
            request=Right.from_json(obj["request"]),
            chosen=obj["chosen"],
            at=obj["at"],
            depleted=obj["depleted"],
            blackened=frozenset(Right.from_json(r) for r in obj["blackened"]),
            permission=obj.get("permission"),
        )


# ---------------------------------------------------------------------------
# Observers
# ---------------------------------------------------------------------------


def init_agent() -> AgentState:
    return AgentState()


def _serving_permission(s: AgentState, lic: License, r: Right) -> Optional[int]:
    for j, p in enumerate(lic.permissions):
        if p.right == r and permission_holds(lic, j, s.constraints, s.now):
            return j
    return None


def usable(s: AgentState, r: Right) -> frozenset:
    """Ids of installed licenses that can serve ``r`` at ``s.now``."""
    return frozenset(lic.id for lic in s.licenses if _serving_permission(s, lic, r) is not None)


def color_of(s: AgentState, r: Right) -> Color:
    try:
        return s.coloring[r]
    except KeyError:
        raise UndefinedRightError(r) from None


def _can_serve_later(c, st: ConstraintState, lid: str, path: tuple, now: int) -> bool:
    # Satisfiability only shrinks over time: counts never refill, deadlines
    # and activated windows never reopen. So "satisfiable at some t >= now"
    # reduces to a per-node check at ``now``.
    for p, node in governing_nodes(c, path):
        if isinstance(node, Count) and st.remaining[(lid, p)] == 0:
            return False
        if not isinstance(node, Count) and not eval_constraint(node, st, lid, p, now):
            return False
    return True


def license_can_ever_serve(s: AgentState, lic: License, r: Right) -> bool:
    if not _can_serve_later(lic.top, s.constraints, lic.id, ("top",), s.now):
        return False
    return any(
        p.right == r and _can_serve_later(p.constraint, s.constraints, lic.id, ("perm", j), s.now)
        for j, p in enumerate(lic.permissions)
    )


def lost_rights(s: AgentState) -> frozenset:
    """White rights that no installed license can serve now or at any later tick."""
    lost = set()
    for r, color in s.coloring.items():
        if color is Color.WHITE and not any(license_can_ever_serve(s, lic, r) for lic in s.licenses):
            lost.add(r)
    return frozenset(lost)


# ---------------------------------------------------------------------------
# Transitions
# ---------------------------------------------------------------------------


def install(s: AgentState, lic: License) -> AgentState:
    if lic.id in s.license_ids:
        raise DuplicateLicenseError(f"license {lic.id!r} is already installed")
    new_rights = {r: Color.WHITE for r in lic.rights if r not in s.coloring}
    return AgentState(
        licenses=s.licenses + (lic,),
        constraints=s.constraints.with_license(lic),
        now=s.now,
        coloring=s.coloring.update(new_rights) if new_rights else s.coloring,
    )


def tick(s: AgentState) -> AgentState:
    return AgentState(s.licenses, s.constraints, s.now + 1, s.coloring)


Chooser = Callable[[frozenset, AgentState], str]


def request(s: AgentState, r: Right, choose: Chooser) -> tuple:
    """Serve ``r`` through the license picked by ``choose``.

    Returns ``(successor, decision)``. Raises :class:`NotPermitted` when no
    installed license can serve ``r``; the state is then unchanged.
    """
    candidates = usable(s, r)
    if not candidates:
        raise NotPermitted(r)
    chosen = choose(candidates, s)
    lic = s.license(chosen)

    j = _serving_permission(s, lic, r)
    if j is None:
        # Only reachable with a chooser that ignores its candidates.
        j = next((k for k, p in enumerate(lic.permissions) if p.right == r), None)
    nodes = governing_nodes(lic.top, ("top",))
    if j is not None:
        nodes += governing_nodes(lic.permissions[j].constraint, ("perm", j))
    counts = [(lic.id, p) for p, n in nodes if isinstance(n, Count)]
    intervals = [(lic.id, p) for p, n in nodes if isinstance(n, Interval)]
    constraints = s.constraints.consume(counts, intervals, s.now)

    depleted = not any(permission_holds(lic, k, constraints, s.now) for k in range(len(lic.permissions)))

    blackened = {r}
    if depleted and candidates == frozenset({chosen}):
        blackened |= lic.rights
    coloring = s.coloring.update({b: Color.BLACK for b in blackened if b in s.coloring})
    after = AgentState(s.licenses, constraints, s.now, coloring)
    return after, Decision(r, chosen, s.now, depleted, frozenset(blackened), j)


# ---------------------------------------------------------------------------
# Events and traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Installed:
    license: str
    kind = "installed"

    def to_json(self) -> dict:
        return {"license": self.license}


@dataclass(frozen=True)
class Ticked:
    now: int
    kind = "ticked"

    def to_json(self) -> dict:
        return {"now": self.now}


@dataclass(frozen=True)
class Requested:
    decision: Decision
    kind = "requested"

    def to_json(self) -> dict:
        return {"decision": self.decision.to_json()}


@dataclass(frozen=True)
class Colored:
    right: Right
    cause: str  # "exercised" | "forcedDepletion"
    kind = "colored"

    def to_json(self) -> dict:
        return {"cause": self.cause, "right": self.right.to_json()}


@dataclass(frozen=True)
class Rejected:
    right: Right
    reason: str
    kind = "rejected"

    def to_json(self) -> dict:
        return {"reason": self.reason, "right": self.right.to_json()}


Event = Union[Installed, Ticked, Requested, Colored, Rejected]


def event_to_json(seq: int, ev: Event) -> dict:
    return {"seq": seq, "event": ev.kind, **ev.to_json()}


def event_from_json(obj: dict) -> Event:
    kind = obj["event"]
    if kind == "installed":
        return Installed(obj["license"])
    if kind == "ticked":
        return Ticked(obj["now"])
    if kind == "requested":
        return Requested(Decision.from_json(obj["decision"]))
    if kind == "colored":
        return Colored(Right.from_json(obj["right"]), obj["cause"])
    if kind == "rejected":
        return Rejected(Right.from_json(obj["right"]), obj["reason"])
    raise ValueError(f"unknown event kind {kind!r}")


def dump_trace(events: Iterable[Event]) -> str:
    lines = [json.dumps(event_to_json(i, ev), sort_keys=True, separators=(",", ":")) for i, ev in enumerate(events)]
    return "".join(line + "\n" for line in lines)


def load_trace(text: str) -> list:
    events, expected = [], 0
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if obj.get("seq") != expected:
            raise ValueError(f"line {n}: expected seq {expected}, got {obj.get('seq')!r}")
        events.append(event_from_json(obj))
        expected += 1
    return events


class Session:
    """Runs transitions against one evolving state and records events."""

    def __init__(self, choose: Chooser, state: Optional[AgentState] = None):
        self.choose = choose
        self.state = state if state is not None else init_agent()
        self.events: list = []

    def install(self, lic: License) -> None:
        self.state = install(self.state, lic)
        self.events.append(Installed(lic.id))

    def tick(self) -> None:
        self.state = tick(self.state)
        self.events.append(Ticked(self.state.now))

    def request(self, r: Right) -> Optional[Decision]:
        try:
            after, decision = request(self.state, r, self.choose)
        except NotPermitted:
            self.events.append(Rejected(r, "no usable license"))
            return None
        before = self.state
        self.state = after
        self.events.append(Requested(decision))
        for b in sorted(decision.blackened):
            if before.coloring.get(b) is Color.WHITE:
                cause = "exercised" if b == r else "forcedDepletion"
                self.events.append(Colored(b, cause))
        return decision

    def trace(self) -> str:
        return dump_trace(self.events)
