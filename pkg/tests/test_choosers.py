import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drmlab.agent import init_agent, install, request, usable
from drmlab.choosers import (
    EmptyCandidatesError,
    choice_key,
    choose_baseline,
    choose_labeled,
    make_chooser,
    parse_precedence,
)
from drmlab.rel import (
    DEFAULT_PRECEDENCE,
    TRUE,
    ActionKind,
    And,
    ConstraintKind,
    Count,
    License,
    Permission,
    Right,
    Until,
)
from strategies import license_sets

A = Right("A", ActionKind.PLAY)


def installed(*lics):
    s = init_agent()
    for lic in lics:
        s = install(s, lic)
    return s


def single(lid, top=TRUE, asset="A"):
    return License(lid, {asset}, top, (Permission(TRUE, Right(asset, ActionKind.PLAY)),))


def test_shared_pair_choices(shared_pair):
    s = installed(*shared_pair)
    assert choose_baseline(frozenset({"L1", "L2"}), s) == "L1"
    assert choose_labeled(frozenset({"L1", "L2"}), s) == "L2"


def test_singleton():
    s = installed(single("Only", Count(1)))
    assert choose_baseline(frozenset({"Only"}), s) == "Only"
    assert choose_labeled(frozenset({"Only"}), s) == "Only"


def test_id_tie_break():
    s = installed(single("Lb"), single("La"))
    assert choose_baseline(frozenset({"La", "Lb"}), s) == "La"


def test_forced_penalized_choice(shared_pair):
    s = installed(shared_pair[0])
    assert choose_labeled(frozenset({"L1"}), s) == "L1"


def test_unpenalized_tie_break():
    lc = single("Lc", Count(1))  # last, but single-permission
    ld = License("Ld", {"A", "B"}, TRUE, (Permission(TRUE, A), Permission(TRUE, Right("B", ActionKind.PLAY))))
    s = installed(lc, ld)
    # Lc is CountKind, Ld is Unconstrained: precedence puts Lc first; neither is penalized
    assert not choice_key("Lc", s).penalized and not choice_key("Ld", s).penalized
    assert choose_labeled(frozenset({"Lc", "Ld"}), s) == choose_baseline(frozenset({"Lc", "Ld"}), s) == "Lc"
    both_free = installed(single("Lc"), ld)
    assert choose_labeled(frozenset({"Lc", "Ld"}), both_free) == "Lc"


def test_earliest_deadline_breaks_kind_ties():
    s = installed(single("La", Until(9)), single("Lb", Until(3)))
    assert choose_baseline(frozenset({"La", "Lb"}), s) == "Lb"


def test_custom_precedence_changes_baseline(shared_pair):
    table = parse_precedence(["CountKind", "UntilKind", "IntervalKind", "Unconstrained"])
    s = installed(single("La", Until(9)), single("Lb", Count(3)))
    assert choose_baseline(frozenset({"La", "Lb"}), s) == "La"
    assert choose_baseline(frozenset({"La", "Lb"}), s, table) == "Lb"
    # L1 carries every kind L2 has, so no table ranks L2 above it
    s = installed(*shared_pair)
    assert choose_baseline(frozenset({"L1", "L2"}), s, table) == "L1"


def test_parse_precedence():
    assert parse_precedence(["until", "interval", "count", "unconstrained"]) == DEFAULT_PRECEDENCE
    with pytest.raises(ValueError):
        parse_precedence(["until", "until", "count", "unconstrained"])
    with pytest.raises(ValueError):
        parse_precedence(["until", "count"])
    with pytest.raises(ValueError):
        parse_precedence(["sometimes", "interval", "count", "unconstrained"])


def test_empty_candidates():
    with pytest.raises(EmptyCandidatesError):
        choose_baseline(frozenset(), init_agent())
    with pytest.raises(EmptyCandidatesError):
        choose_labeled(frozenset(), init_agent())


def test_make_chooser():
    assert make_chooser("oma").func is choose_baseline
    assert make_chooser("labeled").func is choose_labeled
    with pytest.raises(ValueError):
        make_chooser("random")


def test_labeled_is_a_heuristic_outside_corpus():
    # Every candidate for A is multi-permission and on its last execution, so
    # the labeled chooser falls back to the baseline order and picks L1,
    # stranding B, while L2 would have cost nothing (C stays available via L3).
    rights = {x: Right(x, ActionKind.PLAY) for x in "ABC"}
    l1 = License("L1", {"A", "B"}, And((Count(1), Until(5))),
                 (Permission(TRUE, rights["A"]), Permission(TRUE, rights["B"])))
    l2 = License("L2", {"A", "C"}, Count(1), (Permission(TRUE, rights["A"]), Permission(TRUE, rights["C"])))
    l3 = License("L3", {"C"}, TRUE, (Permission(TRUE, rights["C"]),))
    from drmlab.agent import lost_rights

    s = installed(l1, l2, l3)
    assert choose_labeled(usable(s, A), s) == "L1"
    assert lost_rights(request(s, A, choose_labeled)[0]) == {rights["B"]}
    assert lost_rights(request(s, A, lambda c, _s: "L2")[0]) == frozenset()


def _relabel(lic, mapping):
    return License(mapping[lic.id], lic.about, lic.top, lic.permissions)


@settings(max_examples=300)
@given(license_sets(max_size=4), st.sampled_from(["A", "B", "C"]))
def test_chooser_properties(lics, asset):
    s = installed(*lics)
    for action in (ActionKind.PLAY, ActionKind.DISPLAY):
        r = Right(asset, action)
        cands = usable(s, r)
        if not cands:
            continue
        b, l = choose_baseline(cands, s), choose_labeled(cands, s)
        assert b in cands and l in cands
        assert choose_baseline(frozenset(sorted(cands)), s) == b
        assert choose_labeled(frozenset(sorted(cands)), s) == l
        keys = {c: choice_key(c, s) for c in cands}
        if not any(k.penalized for k in keys.values()):
            assert l == b
        if keys[l].penalized:
            assert all(k.penalized for k in keys.values())
        # monotone relabeling keeps the choice (ids only act as the last tie-break)
        mapping = {lic.id: f"M{lic.id}" for lic in lics}
        s2 = installed(*(_relabel(x, mapping) for x in lics))
        c2 = frozenset(mapping[c] for c in cands)
        assert choose_baseline(c2, s2) == mapping[b]
        assert choose_labeled(c2, s2) == mapping[l]


def test_choice_key_fields(shared_pair):
    s = installed(*shared_pair)
    k1, k2 = choice_key("L1", s), choice_key("L2", s)
    assert (k1.penalized, k1.dominant_rank, k1.earliest_deadline) == (True, 0, 30)
    assert (k2.penalized, k2.dominant_rank, k2.earliest_deadline) == (False, 2, None)
    assert DEFAULT_PRECEDENCE[k2.dominant_rank] is ConstraintKind.COUNT
