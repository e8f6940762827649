"""Bounded exhaustive checking of the agent under a license chooser.

An :class:`Instance` is a set of licenses installed at tick 0 plus a
horizon: the number of transitions (requests or ticks) in every explored
trace. From each state the explorer branches over a request for every right
granted by an installed license, and over one tick.

Safety: whenever a license is chosen, its top constraint and the constraint
of the permission it serves are met in the state the choice was made in.

Liveness: along every fair trace, a White right ends up Black. A trace is
fair when no tick lets a usable White right expire, and no request is spent
on anything but a usable White right while one exists. A trace ending with
a White right that can never be served again is a counterexample; one
ending with a White right that is still usable was merely truncated by the
horizon and counts as inconclusive.
"""

from __future__ import annotations

import itertools
import json
import math
import string
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional, Union

from .agent import (
    AgentState,
    Color,
    NotPermitted,
    Session,
    event_to_json,
    init_agent,
    install,
    lost_rights,
    request,
    tick,
    usable,
)
from .choosers import make_chooser
from .rel import (
    DEFAULT_PRECEDENCE,
    TRUE,
    ActionKind,
    And,
    Count,
    Interval,
    License,
    Permission,
    Right,
    TrueConstraint,
    Until,
    constraint_from_json,
    constraint_to_json,
    license_from_json,
    license_to_json,
    permission_holds,
)

__all__ = [
    "Bounds",
    "BoundsTooLargeError",
    "CapExceededError",
    "Corpus",
    "Instance",
    "Report",
    "Row",
    "Step",
    "TICK",
    "Verdict",
    "apply_step",
    "canonical_instance",
    "check_liveness",
    "check_safety",
    "compare_choosers",
    "explore_requests",
    "generate_corpus",
    "is_fair_trace",
    "replay",
]

DEFAULT_CORPUS_CAP = 100_000
DEFAULT_STATE_CAP = 2_000_000


class BoundsTooLargeError(ValueError):
    pass


class CapExceededError(RuntimeError):
    def __init__(self, message: str, explored: int, partial: object = None):
        super().__init__(message)
        self.explored = explored
        self.partial = partial
        self.partial_results = partial is not None


# ---------------------------------------------------------------------------
# Instances and steps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Instance:
    licenses: tuple
    horizon: int
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "licenses", tuple(self.licenses))
        ids = [lic.id for lic in self.licenses]
        if len(set(ids)) != len(ids):
            raise ValueError("license ids must be unique within an instance")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def initial_state(self) -> AgentState:
        s = init_agent()
        for lic in self.licenses:
            s = install(s, lic)
        return s

    def max_deadline(self) -> Optional[int]:
        deadlines = [d for lic in self.licenses for d in lic.deadlines()]
        return max(deadlines) if deadlines else None

    def to_json(self) -> dict:
        return {"horizon": self.horizon, "licenses": [license_to_json(l) for l in self.licenses]}

    @classmethod
    def from_json(cls, obj: dict, name: str = "") -> "Instance":
        return cls(tuple(license_from_json(l) for l in obj["licenses"]), obj["horizon"], name)


@dataclass(frozen=True, order=True)
class Step:
    kind: str  # "request" | "tick"
    right: Optional[Right] = None

    def __str__(self) -> str:
        return "tick" if self.kind == "tick" else f"request {self.right.asset} {self.right.action.value}"


TICK = Step("tick")


def steps_from(s: AgentState) -> list:
    return [Step("request", r) for r in s.rights] + [TICK]


def apply_step(s: AgentState, step: Step, choose) -> tuple:
    """Return ``(successor, decision)``; a rejected request yields ``(s, None)``."""
    if step.kind == "tick":
        return tick(s), None
    try:
        return request(s, step.right, choose)
    except NotPermitted:
        return s, None


def _white_usable(s: AgentState) -> frozenset:
    return frozenset(r for r, c in s.coloring.items() if c is Color.WHITE and usable(s, r))


def _fair_step(s: AgentState, step: Step, after: AgentState, white_usable: frozenset) -> bool:
    if step.kind == "tick":
        return all(usable(after, r) for r in white_usable)
    return not white_usable or step.right in white_usable


def is_fair_trace(instance: Instance, trace: Sequence, choose) -> bool:
    """Replay ``trace`` and check the fairness definition step by step."""
    s = instance.initial_state()
    for step in trace:
        wu = _white_usable(s)
        after, _ = apply_step(s, step, choose)
        if not _fair_step(s, step, after, wu):
            return False
        s = after
    return True


def replay(instance: Instance, trace: Sequence, choose) -> Session:
    session = Session(choose)
    for lic in instance.licenses:
        session.install(lic)
    for step in trace:
        if step.kind == "tick":
            session.tick()
        else:
            session.request(step.right)
    return session


def _resolve(chooser, table) -> tuple:
    if isinstance(chooser, str):
        return chooser, make_chooser(chooser, table)
    return getattr(chooser, "__name__", "custom"), chooser


# ---------------------------------------------------------------------------
# Exploration
# ---------------------------------------------------------------------------


def explore_requests(
    instance: Instance,
    chooser,
    fair_only: bool = False,
    table: tuple = DEFAULT_PRECEDENCE,
    cap: int = 200_000,
) -> set:
    """Every maximal trace (tuple of :class:`Step`) of length ``horizon``."""
    _, choose = _resolve(chooser, table)
    traces: set = set()
    path: list = []

    def walk(s: AgentState) -> None:
        if len(path) == instance.horizon:
            if len(traces) >= cap:
                raise CapExceededError(f"more than {cap} traces", len(traces), set(traces))
            traces.add(tuple(path))
            return
        wu = _white_usable(s) if fair_only else frozenset()
        for step in steps_from(s):
            after, _ = apply_step(s, step, choose)
            if fair_only and not _fair_step(s, step, after, wu):
                continue
            path.append(step)
            walk(after)
            path.pop()

    walk(instance.initial_state())
    return traces


@dataclass
class Verdict:
    property: str
    holds: bool
    chooser: str = ""
    counterexample: Optional[list] = None  # events
    steps: Optional[tuple] = None
    reason: str = ""
    lost: tuple = ()
    inconclusive: int = 0
    explored: int = 0
    warnings: tuple = ()

    def __post_init__(self):
        if self.holds == (self.counterexample is not None):
            raise ValueError("a verdict carries a counterexample exactly when it fails")

    def to_json(self) -> dict:
        return {
            "chooser": self.chooser,
            "counterexample": None
            if self.counterexample is None
            else [event_to_json(i, ev) for i, ev in enumerate(self.counterexample)],
            "explored": self.explored,
            "holds": self.holds,
            "inconclusive": self.inconclusive,
            "lost": [r.to_json() for r in self.lost],
            "property": self.property,
            "reason": self.reason,
            "warnings": list(self.warnings),
        }


def _warnings(instance: Instance) -> tuple:
    d = instance.max_deadline()
    if d is not None and instance.horizon <= d:
        return (f"horizon {instance.horizon} does not exceed the largest deadline {d}; "
                "liveness verdicts may be inconclusive",)
    return ()


def _safe_decision(before: AgentState, decision) -> bool:
    try:
        lic = before.license(decision.chosen)
    except KeyError:
        return False
    j = decision.permission
    if j is None or lic.permissions[j].right != decision.request:
        return False
    return permission_holds(lic, j, before.constraints, before.now)


def check_safety(instance: Instance, chooser, table: tuple = DEFAULT_PRECEDENCE,
                 cap: int = DEFAULT_STATE_CAP) -> Verdict:
    name, choose = _resolve(chooser, table)
    seen: set = set()
    path: list = []
    explored = 0

    def dfs(s: AgentState, depth: int):
        nonlocal explored
        if depth == instance.horizon or (s, depth) in seen:
            return None
        explored += 1
        if explored > cap:
            raise CapExceededError(f"safety exploration exceeded {cap} states", explored)
        for step in steps_from(s):
            try:
                after, decision = apply_step(s, step, choose)
            except KeyError:
                # chooser named a license that is not installed
                return path + [step], f"chooser returned unknown license on {step}"
            path.append(step)
            if decision is not None and not _safe_decision(s, decision):
                return list(path), (f"license {decision.chosen} chosen for {decision.request} "
                                    f"at tick {decision.at} with its constraints not met")
            found = dfs(after, depth + 1)
            path.pop()
            if found:
                return found
        seen.add((s, depth))
        return None

    found = dfs(instance.initial_state(), 0)
    if found is None:
        return Verdict("safety", True, name, explored=explored, warnings=_warnings(instance))
    steps, reason = found
    events = _replay_events(instance, steps, choose)
    return Verdict("safety", False, name, events, tuple(steps), reason, explored=explored,
                   warnings=_warnings(instance))


def _replay_events(instance: Instance, steps, choose) -> list:
    try:
        return replay(instance, steps, choose).events
    except KeyError:
        return replay(instance, steps[:-1], choose).events


def check_liveness(instance: Instance, chooser, table: tuple = DEFAULT_PRECEDENCE,
                   cap: int = DEFAULT_STATE_CAP) -> Verdict:
    name, choose = _resolve(chooser, table)
    seen: set = set()
    truncated: set = set()
    path: list = []
    explored = 0

    def dfs(s: AgentState, depth: int):
        nonlocal explored
        key = (s, depth)
        if key in seen:
            return None
        explored += 1
        if explored > cap:
            raise CapExceededError(f"liveness exploration exceeded {cap} states", explored)
        if all(c is Color.BLACK for c in s.coloring.values()):
            # Black is permanent, nothing left to lose below this state.
            seen.add(key)
            return None
        if depth == instance.horizon:
            lost = lost_rights(s)
            if lost:
                return list(path), lost, "right(s) left White and unservable: " + ", ".join(map(str, sorted(lost)))
            truncated.add(s)
            seen.add(key)
            return None
        wu = _white_usable(s)
        for step in steps_from(s):
            after, _ = apply_step(s, step, choose)
            if not _fair_step(s, step, after, wu):
                continue
            path.append(step)
            # unless: no transition turns a Black right White
            for r, c in s.coloring.items():
                if c is Color.BLACK and after.coloring[r] is not Color.BLACK:
                    return list(path), frozenset(), f"{r} turned White again"
            # eventually: requesting a usable White right blackens it
            if step.kind == "request" and step.right in wu and after.coloring[step.right] is not Color.BLACK:
                return list(path), frozenset(), f"request for {step.right} did not blacken it"
            found = dfs(after, depth + 1)
            path.pop()
            if found:
                return found
        seen.add(key)
        return None

    found = dfs(instance.initial_state(), 0)
    if found is None:
        return Verdict("liveness", True, name, inconclusive=len(truncated), explored=explored,
                       warnings=_warnings(instance))
    steps, lost, reason = found
    events = replay(instance, steps, choose).events
    return Verdict("liveness", False, name, events, tuple(steps), reason, tuple(sorted(lost)),
                   len(truncated), explored, _warnings(instance))


# ---------------------------------------------------------------------------
# Corpus generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bounds:
    max_licenses: int
    max_assets: int
    max_actions: int
    max_count: int
    max_deadline: int
    horizon: int

    _ALIASES = {
        "licenses": "max_licenses",
        "assets": "max_assets",
        "actions": "max_actions",
        "count": "max_count",
        "deadline": "max_deadline",
    }

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"bound {f.name} must be an integer >= 1, got {v!r}")
        if self.max_assets > 26:
            raise ValueError("at most 26 assets are supported")
        if self.max_actions > len(ActionKind):
            raise ValueError(f"at most {len(ActionKind)} actions exist")

    @classmethod
    def parse(cls, text: str) -> "Bounds":
        """Parse ``licenses=2,assets=2,...`` (``max_`` prefixes optional)."""
        values = {}
        for item in filter(None, (p.strip() for p in text.split(","))):
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"bad bounds item {item!r}; expected key=value")
            key = key.strip()
            key = cls._ALIASES.get(key, key)
            if key not in {f.name for f in fields(cls)}:
                raise ValueError(f"unknown bound {key!r}")
            values[key] = int(value)
        missing = {f.name for f in fields(cls)} - set(values)
        if missing:
            raise ValueError(f"missing bounds: {', '.join(sorted(missing))}")
        return cls(**values)

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_ACTIONS = list(ActionKind)


def _asset_names(n: int) -> list:
    return list(string.ascii_uppercase[:n])


def _top_options(b: Bounds) -> list:
    out = []
    counts = [None] + [Count(n) for n in range(1, b.max_count + 1)]
    untils = [None] + [Until(d) for d in range(1, b.max_deadline + 1)]
    intervals = [None] + [Interval(d) for d in range(1, b.max_deadline + 1)]
    for parts in itertools.product(counts, untils, intervals):
        parts = tuple(p for p in parts if p is not None)
        out.append(TRUE if not parts else parts[0] if len(parts) == 1 else And(parts))
    return out


def _in_top_space(c, b: Bounds) -> bool:
    parts = c.parts if isinstance(c, And) else (c,)
    if isinstance(c, And) and len(parts) < 2:
        return False
    if isinstance(c, TrueConstraint):
        return True
    order = {Count: 0, Until: 1, Interval: 2}
    ranks = []
    for p in parts:
        if type(p) not in order:
            return False
        ranks.append(order[type(p)])
        if isinstance(p, Count) and not 1 <= p.total <= b.max_count:
            return False
        if isinstance(p, Until) and not 1 <= p.deadline <= b.max_deadline:
            return False
        if isinstance(p, Interval) and not 1 <= p.duration <= b.max_deadline:
            return False
    return ranks == sorted(set(ranks))


# A license shape is a license without its id:
# (about, rights as (asset, action) pairs, top constraint as canonical JSON).
def _shape(lic: License) -> tuple:
    rights = tuple(sorted((p.right.asset, p.right.action.value) for p in lic.permissions))
    return tuple(sorted(lic.about)), rights, json.dumps(constraint_to_json(lic.top), sort_keys=True)


def _rename(shape: tuple, amap: dict, xmap: dict) -> tuple:
    about, rights, top = shape
    return (
        tuple(sorted(amap[a] for a in about)),
        tuple(sorted((amap[a], xmap[x]) for a, x in rights)),
        top,
    )


def _canonical_shapes(shapes: Iterable[tuple]) -> tuple:
    shapes = list(shapes)
    assets = sorted({a for about, _, _ in shapes for a in about})
    actions = sorted({x for _, rights, _ in shapes for _, x in rights})
    a_targets = _asset_names(len(assets))
    x_targets = [a.value for a in _ACTIONS[: len(actions)]]
    best = None
    for ap in itertools.permutations(a_targets):
        amap = dict(zip(assets, ap))
        for xp in itertools.permutations(x_targets):
            xmap = dict(zip(actions, xp))
            cand = tuple(sorted(_rename(s, amap, xmap) for s in shapes))
            if best is None or cand < best:
                best = cand
    return best


def _build_instance(shapes: tuple, horizon: int, name: str = "") -> Instance:
    licenses = []
    for i, (about, rights, top) in enumerate(shapes, 1):
        perms = tuple(Permission(TRUE, Right(a, ActionKind(x))) for a, x in rights)
        licenses.append(License(f"L{i}", frozenset(about), constraint_from_json(json.loads(top)), perms))
    return Instance(tuple(licenses), horizon, name)


def canonical_instance(instance: Instance) -> Instance:
    """Representative of ``instance`` under asset/action renaming.

    License order and ids, and permission order, are normalized as well.
    Permission constraints are dropped from the shape, so this is only
    meaningful for instances whose permissions are unconstrained.
    """
    return _build_instance(_canonical_shapes(_shape(l) for l in instance.licenses), instance.horizon)


def _license_space_size(b: Bounds) -> int:
    per_top = (b.max_count + 1) * (b.max_deadline + 1) ** 2
    return per_top * (2 ** (b.max_assets * b.max_actions) - 1)


def _raw_instance_count(b: Bounds) -> int:
    n = _license_space_size(b)
    return sum(math.comb(n + k - 1, k) for k in range(1, b.max_licenses + 1))


class Corpus(Sequence):
    """All instances within ``bounds``, one per renaming class, in canonical order.

    Licenses in a corpus instance grant unconstrained permissions, cover
    every asset in ``about`` with at least one action, and carry a top
    constraint combining at most one each of Count(1..max_count),
    Until(1..max_deadline) and Interval(1..max_deadline).

    Membership is decided structurally and never forces enumeration, so it
    works for bounds far beyond the enumeration cap.
    """

    def __init__(self, bounds: Bounds, cap: int = DEFAULT_CORPUS_CAP):
        self.bounds = bounds
        self.cap = cap
        self._items: Optional[list] = None

    def _materialize(self) -> list:
        if self._items is not None:
            return self._items
        b = self.bounds
        group = math.factorial(b.max_assets) * math.factorial(b.max_actions)
        raw = _raw_instance_count(b)
        if raw / group > self.cap:
            raise BoundsTooLargeError(
                f"bounds {b.to_json()} give at least {raw // group} instances, over the cap of {self.cap}"
            )
        assets = _asset_names(b.max_assets)
        actions = [a.value for a in _ACTIONS[: b.max_actions]]
        tops = [json.dumps(constraint_to_json(t), sort_keys=True) for t in _top_options(b)]
        action_sets = [s for k in range(1, len(actions) + 1) for s in itertools.combinations(actions, k)]
        shapes = []
        for k in range(1, len(assets) + 1):
            for about in itertools.combinations(assets, k):
                for choice in itertools.product(action_sets, repeat=k):
                    rights = tuple(sorted((a, x) for a, xs in zip(about, choice) for x in xs))
                    shapes.extend((about, rights, top) for top in tops)
        classes = set()
        for n in range(1, b.max_licenses + 1):
            for combo in itertools.combinations_with_replacement(shapes, n):
                classes.add(_canonical_shapes(combo))
                if len(classes) > self.cap:
                    raise BoundsTooLargeError(f"bounds {b.to_json()} exceed the cap of {self.cap} instances")
        ordered = sorted(classes, key=lambda c: (len(c), c))
        self._items = [_build_instance(c, b.horizon, f"c{i:05d}") for i, c in enumerate(ordered)]
        return self._items

    def __len__(self) -> int:
        return len(self._materialize())

    def __getitem__(self, idx):
        return self._materialize()[idx]

    def __iter__(self):
        return iter(self._materialize())

    def __contains__(self, instance) -> bool:
        if not isinstance(instance, Instance):
            return False
        b = self.bounds
        if instance.horizon != b.horizon or not 1 <= len(instance.licenses) <= b.max_licenses:
            return False
        assets, actions = set(), set()
        for lic in instance.licenses:
            if any(not isinstance(p.constraint, TrueConstraint) for p in lic.permissions):
                return False
            rights = [p.right for p in lic.permissions]
            if len(set(rights)) != len(rights) or {r.asset for r in rights} != set(lic.about):
                return False
            if not _in_top_space(lic.top, b):
                return False
            assets |= lic.about
            actions |= {r.action for r in rights}
        return len(assets) <= b.max_assets and len(actions) <= b.max_actions


def generate_corpus(bounds: Union[Bounds, tuple], cap: int = DEFAULT_CORPUS_CAP) -> Corpus:
    if not isinstance(bounds, Bounds):
        bounds = Bounds(*bounds)
    return Corpus(bounds, cap)


# ---------------------------------------------------------------------------
# Chooser comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Row:
    instance: str
    chooser: str
    safety: Optional[bool]
    liveness: Optional[bool]
    lost: int
    inconclusive: int = 0
    note: str = ""

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Report:
    rows: list
    baseline: str = "oma"
    labeled: str = "labeled"

    def _violators(self, chooser: str) -> list:
        return sorted(r.instance for r in self.rows if r.chooser == chooser and r.liveness is False)

    @property
    def baseline_loss(self) -> list:
        return self._violators(self.baseline)

    @property
    def labeled_loss(self) -> list:
        return self._violators(self.labeled)

    @property
    def witnesses(self) -> list:
        return sorted(set(self.baseline_loss) - set(self.labeled_loss))

    @property
    def dominance(self) -> bool:
        return set(self.labeled_loss) <= set(self.baseline_loss)

    @property
    def strict_dominance(self) -> bool:
        return self.dominance and bool(self.witnesses)

    def safety_violations(self, chooser: str) -> int:
        return sum(1 for r in self.rows if r.chooser == chooser and r.safety is False)

    def aggregates(self) -> dict:
        instances = sorted({r.instance for r in self.rows})
        return {
            "baseline_loss": self.baseline_loss,
            "capped": sorted({r.instance for r in self.rows if r.note}),
            "dominance": self.dominance,
            "instances": len(instances),
            "labeled_loss": self.labeled_loss,
            "safety_violations": {c: self.safety_violations(c) for c in (self.baseline, self.labeled)},
            "strict_dominance": self.strict_dominance,
            "witnesses": self.witnesses,
        }

    def to_json(self) -> str:
        doc = {"aggregates": self.aggregates(), "rows": [r.to_json() for r in self.rows]}
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        def fmt(v):
            return "-" if v is None else ("holds" if v else "FAILS")

        header = ("instance", "chooser", "safety", "liveness", "lost", "inconclusive", "note")
        table = [header] + [
            (r.instance, r.chooser, fmt(r.safety), fmt(r.liveness), str(r.lost), str(r.inconclusive), r.note)
            for r in self.rows
        ]
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
        agg = self.aggregates()
        lines.append("")
        lines.append(f"instances: {agg['instances']}")
        for c in (self.baseline, self.labeled):
            lines.append(f"safety violations ({c}): {agg['safety_violations'][c]}")
        lines.append(f"liveness violations ({self.baseline}): {len(agg['baseline_loss'])}")
        lines.append(f"liveness violations ({self.labeled}): {len(agg['labeled_loss'])}")
        lines.append(f"labeled losses subset of baseline losses: {agg['dominance']}")
        lines.append(f"strict: {agg['strict_dominance']} (witnesses: {len(agg['witnesses'])})")
        return "\n".join(lines) + "\n"


def _check_instance(args) -> list:
    instance, table, cap, choosers = args
    rows = []
    for name in choosers:
        try:
            safety = check_safety(instance, name, table, cap)
            live = check_liveness(instance, name, table, cap)
        except CapExceededError as exc:
            rows.append(Row(instance.name, name, None, None, 0, 0, f"cap-exceeded: {exc}"))
            continue
        rows.append(Row(instance.name, name, safety.holds, live.holds, len(live.lost), live.inconclusive))
    return rows


def compare_choosers(corpus: Iterable[Instance], table: tuple = DEFAULT_PRECEDENCE,
                     cap: int = DEFAULT_STATE_CAP, jobs: int = 1,
                     progress: Optional[Callable[[int], None]] = None) -> Report:
    """Check safety and liveness for both choosers on every instance."""
    instances = list(corpus)
    if not instances:
        raise ValueError("corpus is empty")
    work = [(inst, table, cap, ("oma", "labeled")) for inst in instances]
    rows: list = []
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            for i, chunk in enumerate(pool.map(_check_instance, work, chunksize=16)):
                rows.extend(chunk)
                if progress:
                    progress(i + 1)
    else:
        for i, w in enumerate(work):
            rows.extend(_check_instance(w))
            if progress:
                progress(i + 1)
    return Report(rows)
