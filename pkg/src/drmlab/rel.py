"""License abstract syntax, the JSON license format, and constraint semantics.

A license is an agreement about a set of assets under a top-level
constraint, granting a list of permissions; any single permission may be
exercised per request. Constraint residue (remaining counts, interval
activation times) lives outside the license in a :class:`ConstraintState`
keyed by ``(license_id, path)``, where ``path`` addresses one node of the
license's constraint trees:

* ``("top",)`` is the top-level constraint,
* ``("perm", j)`` is the constraint of permission ``j``,
* a trailing integer ``i`` selects part ``i`` of a conjunction.
"""

from __future__ import annotations

import enum
import json
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Any, Optional, Union

__all__ = [
    "ActionKind",
    "And",
    "Constraint",
    "ConstraintKind",
    "ConstraintState",
    "Count",
    "DEFAULT_PRECEDENCE",
    "FrozenMap",
    "Interval",
    "Label",
    "License",
    "LicenseError",
    "LicenseSyntaxError",
    "LicenseValidationError",
    "MissingStateError",
    "Permission",
    "Right",
    "TRUE",
    "TrueConstraint",
    "Until",
    "compute_label",
    "constraint_from_json",
    "constraint_to_json",
    "dominant_constraint",
    "eval_constraint",
    "license_from_json",
    "license_to_json",
    "parse_license",
    "permission_set",
    "permitted",
    "serialize_license",
]


class LicenseError(ValueError):
    """Base class for license document errors.

    ``path`` points at the offending field, e.g. ``permissions[1].asset``.
    """

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class LicenseSyntaxError(LicenseError):
    pass


class LicenseValidationError(LicenseError):
    pass


class MissingStateError(KeyError):
    """A constraint node has no residue entry; the state was built wrong."""


class FrozenMap(Mapping):
    """Small immutable, hashable mapping used for state components."""

    __slots__ = ("_d", "_hash")

    def __init__(self, items: Union[Mapping, Iterable, None] = None):
        self._d = dict(items) if items is not None else {}
        self._hash = None

    def __getitem__(self, key):
        return self._d[key]

    def __iter__(self) -> Iterator:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._d.items()))
        return self._hash

    def __eq__(self, other) -> bool:
        if isinstance(other, FrozenMap):
            return self._d == other._d
        if isinstance(other, Mapping):
            return self._d == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        return f"FrozenMap({self._d!r})"

    def set(self, key, value) -> "FrozenMap":
        d = dict(self._d)
        d[key] = value
        return FrozenMap(d)

    def update(self, items) -> "FrozenMap":
        d = dict(self._d)
        d.update(items)
        return FrozenMap(d)


# ---------------------------------------------------------------------------
# Rights
# ---------------------------------------------------------------------------


class ActionKind(str, enum.Enum):
    PLAY = "play"
    DISPLAY = "display"
    PRINT = "print"
    EXECUTE = "execute"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, order=True)
class Right:
    asset: str
    action: ActionKind

    def __post_init__(self):
        if not isinstance(self.asset, str) or not self.asset:
            raise LicenseValidationError("asset id must be a non-empty string")
        if not isinstance(self.action, ActionKind):
            object.__setattr__(self, "action", ActionKind(self.action))

    def __str__(self) -> str:
        return f"({self.asset},{self.action.value})"

    def to_json(self) -> dict:
        return {"action": self.action.value, "asset": self.asset}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Right":
        return cls(obj["asset"], ActionKind(obj["action"]))


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrueConstraint:
    def __repr__(self) -> str:
        return "TRUE"


TRUE = TrueConstraint()


@dataclass(frozen=True)
class Count:
    total: int


@dataclass(frozen=True)
class Until:
    deadline: int


@dataclass(frozen=True)
class Interval:
    duration: int


@dataclass(frozen=True)
class And:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))


Constraint = Union[TrueConstraint, Count, Until, Interval, And]
Path = tuple


class ConstraintKind(enum.Enum):
    UNTIL = "UntilKind"
    INTERVAL = "IntervalKind"
    COUNT = "CountKind"
    UNCONSTRAINED = "Unconstrained"

    @classmethod
    def parse(cls, name: str) -> "ConstraintKind":
        key = name.strip().lower()
        if key.endswith("kind"):
            key = key[: -len("kind")]
        for kind in cls:
            if kind.name.lower() == key:
                return kind
        raise ValueError(f"unknown constraint kind {name!r}")


DEFAULT_PRECEDENCE: tuple = (
    ConstraintKind.UNTIL,
    ConstraintKind.INTERVAL,
    ConstraintKind.COUNT,
    ConstraintKind.UNCONSTRAINED,
)

_KIND_OF = {Until: ConstraintKind.UNTIL, Interval: ConstraintKind.INTERVAL, Count: ConstraintKind.COUNT}


def iter_nodes(c: Constraint, path: Path) -> Iterator[tuple]:
    """Yield ``(path, node)`` for every non-conjunction node of ``c``."""
    if isinstance(c, And):
        for i, part in enumerate(c.parts):
            yield from iter_nodes(part, path + (i,))
    else:
        yield path, c


def governing_nodes(c: Constraint, path: Path) -> list:
    # Direct conjuncts only; conjunctions are flat by construction.
    return list(iter_nodes(c, path))


def constraint_kinds(c: Constraint) -> set:
    return {_KIND_OF[type(node)] for _, node in iter_nodes(c, ()) if type(node) in _KIND_OF}


def _validate_constraint(c: Any, where: str) -> Constraint:
    if isinstance(c, TrueConstraint):
        return c
    if isinstance(c, Count):
        if not _is_int(c.total) or c.total < 1:
            raise LicenseValidationError("count must be an integer >= 1", where + ".count")
        return c
    if isinstance(c, Until):
        if not _is_int(c.deadline) or c.deadline < 0:
            raise LicenseValidationError("until must be a non-negative integer tick", where + ".until")
        return c
    if isinstance(c, Interval):
        if not _is_int(c.duration) or c.duration < 1:
            raise LicenseValidationError("interval must be an integer >= 1", where + ".interval")
        return c
    if isinstance(c, And):
        if not c.parts:
            raise LicenseValidationError("conjunction must be non-empty", where + ".and")
        seen = set()
        for i, part in enumerate(c.parts):
            ppath = f"{where}.and[{i}]"
            if isinstance(part, And):
                raise LicenseValidationError("nested conjunction (not flattened)", ppath)
            _validate_constraint(part, ppath)
            kind = type(part)
            if kind in _KIND_OF:
                if kind in seen:
                    raise LicenseValidationError(
                        f"duplicate {kind.__name__.lower()} constraint in one conjunction", ppath
                    )
                seen.add(kind)
        return c
    raise LicenseValidationError(f"not a constraint: {c!r}", where)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


# ---------------------------------------------------------------------------
# Licenses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Permission:
    constraint: Constraint
    right: Right


@dataclass(frozen=True)
class License:
    id: str
    about: frozenset
    top: Constraint
    permissions: tuple

    def __post_init__(self):
        object.__setattr__(self, "about", frozenset(self.about))
        object.__setattr__(self, "permissions", tuple(self.permissions))
        if not isinstance(self.id, str) or not self.id:
            raise LicenseValidationError("license id must be a non-empty string", "id")
        if not self.about:
            raise LicenseValidationError("about must name at least one asset", "about")
        for a in self.about:
            if not isinstance(a, str) or not a:
                raise LicenseValidationError("asset ids must be non-empty strings", "about")
        _validate_constraint(self.top, "top")
        if not self.permissions:
            raise LicenseValidationError("at least one permission is required", "permissions")
        for j, p in enumerate(self.permissions):
            if p.right.asset not in self.about:
                raise LicenseValidationError(
                    f"asset {p.right.asset!r} is not in about", f"permissions[{j}].asset"
                )
            _validate_constraint(p.constraint, f"permissions[{j}].constraint")

    @property
    def rights(self) -> frozenset:
        return frozenset(p.right for p in self.permissions)

    def constraint_nodes(self) -> Iterator[tuple]:
        """Yield ``(path, node)`` over the top and every permission constraint."""
        yield from iter_nodes(self.top, ("top",))
        for j, p in enumerate(self.permissions):
            yield from iter_nodes(p.constraint, ("perm", j))

    def deadlines(self) -> list:
        return [n.deadline for _, n in self.constraint_nodes() if isinstance(n, Until)]


# ---------------------------------------------------------------------------
# Constraint residue
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintState:
    """Remaining executions per Count node and activation tick per Interval node."""

    remaining: FrozenMap = field(default_factory=FrozenMap)
    first_use: FrozenMap = field(default_factory=FrozenMap)

    @classmethod
    def fresh(cls, licenses: Iterable[License]) -> "ConstraintState":
        st = cls()
        for lic in licenses:
            st = st.with_license(lic)
        return st

    def with_license(self, lic: License) -> "ConstraintState":
        rem, first = {}, {}
        for path, node in lic.constraint_nodes():
            if isinstance(node, Count):
                rem[(lic.id, path)] = node.total
            elif isinstance(node, Interval):
                first[(lic.id, path)] = None
        return ConstraintState(self.remaining.update(rem), self.first_use.update(first))

    def consume(self, count_keys: Iterable, interval_keys: Iterable, now: int) -> "ConstraintState":
        rem = {k: max(0, self.remaining[k] - 1) for k in count_keys}
        first = {k: now for k in interval_keys if self.first_use[k] is None}
        return ConstraintState(
            self.remaining.update(rem) if rem else self.remaining,
            self.first_use.update(first) if first else self.first_use,
        )

    def for_license(self, lid: str) -> dict:
        out = {}
        for (l, path), v in self.remaining.items():
            if l == lid:
                out[("count", path)] = v
        for (l, path), v in self.first_use.items():
            if l == lid:
                out[("interval", path)] = v
        return out


def eval_constraint(c: Constraint, st: ConstraintState, lid: str, path: Path, now: int) -> bool:
    """Whether ``c`` (rooted at ``path`` of license ``lid``) is met at tick ``now``."""
    if isinstance(c, TrueConstraint):
        return True
    if isinstance(c, And):
        return all(eval_constraint(p, st, lid, path + (i,), now) for i, p in enumerate(c.parts))
    if isinstance(c, Count):
        try:
            return st.remaining[(lid, path)] > 0
        except KeyError:
            raise MissingStateError((lid, path)) from None
    if isinstance(c, Until):
        return now <= c.deadline
    if isinstance(c, Interval):
        try:
            start = st.first_use[(lid, path)]
        except KeyError:
            raise MissingStateError((lid, path)) from None
        return start is None or now <= start + c.duration
    raise TypeError(f"not a constraint: {c!r}")


def permission_holds(lic: License, j: int, st: ConstraintState, now: int) -> bool:
    return eval_constraint(lic.top, st, lic.id, ("top",), now) and eval_constraint(
        lic.permissions[j].constraint, st, lic.id, ("perm", j), now
    )


def permission_set(licenses: Iterable[License], st: ConstraintState, now: int) -> frozenset:
    out = set()
    for lic in licenses:
        if not eval_constraint(lic.top, st, lic.id, ("top",), now):
            continue
        for j, p in enumerate(lic.permissions):
            if eval_constraint(p.constraint, st, lic.id, ("perm", j), now):
                out.add(p.right)
    return frozenset(out)


def permitted(right: Right, licenses: Iterable[License], st: ConstraintState, now: int) -> bool:
    return right in permission_set(licenses, st, now)


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------


def dominant_constraint(lic: License, table: tuple = DEFAULT_PRECEDENCE) -> ConstraintKind:
    kinds = constraint_kinds(lic.top)
    for p in lic.permissions:
        kinds |= constraint_kinds(p.constraint)
    kinds.add(ConstraintKind.UNCONSTRAINED)
    return min(kinds, key=table.index)


def governing_count_keys(lic: License) -> list:
    """Count nodes whose satisfaction every permission of ``lic`` needs."""
    keys = [(lic.id, p) for p, n in governing_nodes(lic.top, ("top",)) if isinstance(n, Count)]
    if len(lic.permissions) == 1:
        c = lic.permissions[0].constraint
        keys += [(lic.id, p) for p, n in governing_nodes(c, ("perm", 0)) if isinstance(n, Count)]
    return keys


@dataclass(frozen=True)
class Label:
    multi: bool
    dominant: ConstraintKind
    last: bool

    def to_json(self) -> dict:
        return {"dominant": self.dominant.value, "last": self.last, "multi": self.multi}


def compute_label(lic: License, st: ConstraintState, table: tuple = DEFAULT_PRECEDENCE) -> Label:
    last = any(st.remaining[k] == 1 for k in governing_count_keys(lic))
    return Label(multi=len(lic.rights) > 1, dominant=dominant_constraint(lic, table), last=last)


# ---------------------------------------------------------------------------
# JSON format
# ---------------------------------------------------------------------------

_CONSTRAINT_KEYS = {"count": Count, "until": Until, "interval": Interval}


def constraint_from_json(obj: Any, where: str = "constraint") -> Constraint:
    if obj == "true":
        return TRUE
    if not isinstance(obj, dict):
        raise LicenseSyntaxError('constraint must be "true" or an object', where)
    if len(obj) != 1:
        raise LicenseSyntaxError(f"constraint object needs exactly one key, got {sorted(obj)}", where)
    (key, value), = obj.items()
    if key == "and":
        if not isinstance(value, list):
            raise LicenseSyntaxError("and expects a list", where + ".and")
        parts = []
        for i, item in enumerate(value):
            c = constraint_from_json(item, f"{where}.and[{i}]")
            if isinstance(c, And):
                parts.extend(c.parts)
            else:
                parts.append(c)
        return _validate_constraint(And(tuple(parts)), where)
    if key not in _CONSTRAINT_KEYS:
        raise LicenseSyntaxError(f"unknown constraint key {key!r}", where)
    if not _is_int(value):
        raise LicenseSyntaxError(f"{key} expects an integer", f"{where}.{key}")
    return _validate_constraint(_CONSTRAINT_KEYS[key](value), where)


def constraint_to_json(c: Constraint) -> Any:
    if isinstance(c, TrueConstraint):
        return "true"
    if isinstance(c, Count):
        return {"count": c.total}
    if isinstance(c, Until):
        return {"until": c.deadline}
    if isinstance(c, Interval):
        return {"interval": c.duration}
    if isinstance(c, And):
        return {"and": [constraint_to_json(p) for p in c.parts]}
    raise TypeError(f"not a constraint: {c!r}")


_LICENSE_KEYS = ("id", "about", "top", "permissions")
_PERMISSION_KEYS = ("action", "asset", "constraint")


def license_from_json(obj: Any) -> License:
    if not isinstance(obj, dict):
        raise LicenseSyntaxError("license document must be a JSON object")
    unknown = set(obj) - set(_LICENSE_KEYS)
    if unknown:
        raise LicenseSyntaxError(f"unknown key {sorted(unknown)[0]!r}", sorted(unknown)[0])
    for key in ("id", "about", "permissions"):
        if key not in obj:
            raise LicenseValidationError("missing required field", key)
    if not isinstance(obj["id"], str):
        raise LicenseSyntaxError("id must be a string", "id")
    about = obj["about"]
    if not isinstance(about, list) or not all(isinstance(a, str) for a in about):
        raise LicenseSyntaxError("about must be a list of strings", "about")
    if len(set(about)) != len(about):
        raise LicenseValidationError("duplicate asset in about", "about")
    top = constraint_from_json(obj.get("top", "true"), "top")
    perms_obj = obj["permissions"]
    if not isinstance(perms_obj, list):
        raise LicenseSyntaxError("permissions must be a list", "permissions")
    perms = []
    for j, p in enumerate(perms_obj):
        where = f"permissions[{j}]"
        if not isinstance(p, dict):
            raise LicenseSyntaxError("permission must be an object", where)
        unknown = set(p) - set(_PERMISSION_KEYS)
        if unknown:
            raise LicenseSyntaxError(f"unknown key {sorted(unknown)[0]!r}", f"{where}.{sorted(unknown)[0]}")
        for key in ("action", "asset"):
            if key not in p:
                raise LicenseValidationError("missing required field", f"{where}.{key}")
        try:
            action = ActionKind(p["action"])
        except ValueError:
            raise LicenseValidationError(f"unknown action {p['action']!r}", f"{where}.action") from None
        if not isinstance(p["asset"], str) or not p["asset"]:
            raise LicenseSyntaxError("asset must be a non-empty string", f"{where}.asset")
        c = constraint_from_json(p.get("constraint", "true"), f"{where}.constraint")
        perms.append(Permission(c, Right(p["asset"], action)))
    return License(obj["id"], frozenset(about), top, tuple(perms))


def license_to_json(lic: License) -> dict:
    # dicts keep insertion order; this order is the canonical one.
    return {
        "id": lic.id,
        "about": sorted(lic.about),
        "top": constraint_to_json(lic.top),
        "permissions": [
            {
                "action": p.right.action.value,
                "asset": p.right.asset,
                "constraint": constraint_to_json(p.constraint),
            }
            for p in lic.permissions
        ],
    }


def parse_license(text: str) -> License:
    """Parse a license document (JSON) and validate it.

    Raises :class:`LicenseSyntaxError` for malformed documents and
    :class:`LicenseValidationError` for documents that break a license
    invariant; both carry the path of the offending field.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LicenseSyntaxError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    return license_from_json(obj)


def serialize_license(lic: License) -> str:
    return json.dumps(license_to_json(lic), separators=(",", ":"), ensure_ascii=False)


def optional_min(values: Iterable[int]) -> Optional[int]:
    values = list(values)
    return min(values) if values else None
