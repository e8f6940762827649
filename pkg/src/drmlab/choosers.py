"""License-selection policies.

Both choosers order candidates by a lexicographic key. The baseline (OMA)
chooser uses ``(dominant rank, earliest deadline, id)``; the labeled chooser
prefixes that key with a penalty flag for licenses that grant several rights
and allow only one more execution, since serving a request from such a
license depletes it and can strand its other rights.
"""

from __future__ import annotations

import functools
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Optional

from .agent import AgentState
from .rel import DEFAULT_PRECEDENCE, ConstraintKind, compute_label

__all__ = [
    "CHOOSERS",
    "ChoiceKey",
    "EmptyCandidatesError",
    "choice_key",
    "choose_baseline",
    "choose_labeled",
    "make_chooser",
    "parse_precedence",
]


class EmptyCandidatesError(ValueError):
    pass


def parse_precedence(names: Iterable[str]) -> tuple:
    """Build a precedence table (highest priority first) from kind names."""
    kinds = tuple(ConstraintKind.parse(n) for n in names)
    if sorted(k.value for k in kinds) != sorted(k.value for k in ConstraintKind):
        raise ValueError(
            "precedence must list each of UntilKind, IntervalKind, CountKind, Unconstrained exactly once"
        )
    return kinds


@dataclass(frozen=True, order=True)
class ChoiceKey:
    penalized: bool
    dominant_rank: int
    deadline: tuple  # (0, tick) or (1, 0) when the license has no deadline
    id: str

    @property
    def earliest_deadline(self) -> Optional[int]:
        return self.deadline[1] if self.deadline[0] == 0 else None


def choice_key(lid: str, s: AgentState, table: tuple = DEFAULT_PRECEDENCE) -> ChoiceKey:
    lic = s.license(lid)
    label = compute_label(lic, s.constraints, table)
    deadlines = lic.deadlines()
    deadline = (0, min(deadlines)) if deadlines else (1, 0)
    return ChoiceKey(label.multi and label.last, table.index(label.dominant), deadline, lid)


def _check(candidates) -> None:
    if not candidates:
        raise EmptyCandidatesError("chooser called with no candidates")


def choose_baseline(candidates: frozenset, s: AgentState, table: tuple = DEFAULT_PRECEDENCE) -> str:
    _check(candidates)
    keys = [choice_key(c, s, table) for c in candidates]
    return min(keys, key=lambda k: (k.dominant_rank, k.deadline, k.id)).id


def choose_labeled(candidates: frozenset, s: AgentState, table: tuple = DEFAULT_PRECEDENCE) -> str:
    _check(candidates)
    return min(choice_key(c, s, table) for c in candidates).id


CHOOSERS = {"oma": choose_baseline, "labeled": choose_labeled}


def make_chooser(name: str, table: tuple = DEFAULT_PRECEDENCE):
    """Return a ``(candidates, state) -> license id`` callable by name."""
    try:
        fn = CHOOSERS[name]
    except KeyError:
        raise ValueError(f"unknown chooser {name!r}; expected one of {sorted(CHOOSERS)}") from None
    return functools.partial(fn, table=table)
