import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drmlab.agent import (
    Color,
    Colored,
    DuplicateLicenseError,
    Installed,
    NotPermitted,
    Rejected,
    Requested,
    Session,
    Ticked,
    UndefinedRightError,
    color_of,
    dump_trace,
    init_agent,
    install,
    load_trace,
    lost_rights,
    request,
    tick,
    usable,
)
from drmlab.choosers import choose_baseline, choose_labeled
from drmlab.rel import TRUE, ActionKind, Count, License, Permission, Right, permission_set
from drmlab.verifier import apply_step, steps_from
from strategies import license_sets

A, B, D = (Right(x, ActionKind.PLAY) for x in "ABD")
X, Y = Right("X", ActionKind.PLAY), Right("Y", ActionKind.PLAY)


def installed(*lics):
    s = init_agent()
    for lic in lics:
        s = install(s, lic)
    return s


def test_init_agent():
    s = init_agent()
    assert s.now == 0
    assert s.permission_set() == frozenset()
    with pytest.raises(UndefinedRightError):
        color_of(s, A)


def test_install_colors_white(shared_pair):
    l1, l2 = shared_pair
    s = install(init_agent(), l1)
    assert dict(s.coloring) == {A: Color.WHITE, B: Color.WHITE}
    assert dict(install(s, l2).coloring) == {A: Color.WHITE, B: Color.WHITE, D: Color.WHITE}
    # L1 is the only license, so serving A also blackens B (rule 2)
    s, _ = request(s, A, choose_baseline)
    s = install(s, l2)
    assert dict(s.coloring) == {A: Color.BLACK, B: Color.BLACK, D: Color.WHITE}


def test_install_duplicate(shared_pair):
    s = installed(shared_pair[0])
    with pytest.raises(DuplicateLicenseError):
        install(s, shared_pair[0])


def test_tick(shared_pair):
    s = installed(shared_pair[0])
    assert tick(init_agent()).now == 1
    t = tick(s)
    assert t.coloring == s.coloring and t.constraints == s.constraints and t.licenses == s.licenses
    for _ in range(30):
        s = tick(s)
    assert usable(s, A) == {"L1"}
    s = tick(s)
    assert s.now == 31
    assert not usable(s, A)
    assert not s.permission_set()


def test_usable(shared_pair):
    s = installed(*shared_pair)
    assert usable(s, A) == {"L1", "L2"}
    assert usable(s, Right("Q", ActionKind.PLAY)) == frozenset()
    s, _ = request(s, B, choose_baseline)  # depletes L1
    assert usable(s, B) == frozenset()


def test_request_baseline_depletes_l1(shared_pair):
    s = installed(*shared_pair)
    after, d = request(s, A, choose_baseline)
    assert (d.chosen, d.depleted, d.blackened, d.at) == ("L1", True, {A}, 0)
    assert color_of(after, B) is Color.WHITE
    assert lost_rights(after) == {B}


def test_request_labeled_uses_l2(shared_pair):
    s = installed(*shared_pair)
    after, d = request(s, A, choose_labeled)
    assert (d.chosen, d.depleted, d.blackened) == ("L2", False, {A})
    assert lost_rights(after) == frozenset()


def test_rule_two_blackens_siblings():
    lic = License("S", {"X", "Y"}, Count(1), (Permission(TRUE, X), Permission(TRUE, Y)))
    after, d = request(installed(lic), X, choose_baseline)
    assert d.depleted
    assert d.blackened == {X, Y}
    assert color_of(after, Y) is Color.BLACK
    assert lost_rights(after) == frozenset()


def test_request_rejected_leaves_state(shared_pair):
    s = installed(*shared_pair)
    with pytest.raises(NotPermitted):
        request(s, Right("Q", ActionKind.PLAY), choose_baseline)


def test_color_of(shared_pair):
    s = installed(*shared_pair)
    assert color_of(s, B) is Color.WHITE
    s, _ = request(s, A, choose_baseline)
    assert color_of(s, A) is Color.BLACK
    with pytest.raises(UndefinedRightError):
        color_of(s, Right("Q", ActionKind.PLAY))


def test_lost_rights_initial():
    assert lost_rights(init_agent()) == frozenset()


def test_request_interval_activation():
    from drmlab.rel import Interval

    lic = License("I", {"X", "Y"}, Interval(2), (Permission(TRUE, X), Permission(TRUE, Y)))
    s, _ = request(installed(lic), X, choose_baseline)
    s = tick(tick(s))
    assert usable(s, Y) == {"I"}
    s = tick(s)
    assert usable(s, Y) == frozenset()
    assert lost_rights(s) == {Y}


def test_decision_json_round_trip(shared_pair):
    from drmlab.agent import Decision

    _, d = request(installed(*shared_pair), A, choose_baseline)
    assert Decision.from_json(d.to_json()) == d


def test_session_events_and_trace(shared_pair):
    session = Session(choose_baseline)
    for lic in shared_pair:
        session.install(lic)
    session.request(A)
    session.request(B)
    session.tick()
    evs = session.events
    assert [type(e) for e in evs] == [Installed, Installed, Requested, Colored, Rejected, Ticked]
    assert evs[3] == Colored(A, "exercised")
    text = session.trace()
    lines = text.splitlines()
    assert [line.count('"seq":') for line in lines] == [1] * 6
    assert load_trace(text) == evs
    assert dump_trace(load_trace(text)) == text


def test_session_forced_depletion_event():
    lic = License("S", {"X", "Y"}, Count(1), (Permission(TRUE, X), Permission(TRUE, Y)))
    session = Session(choose_baseline)
    session.install(lic)
    session.request(X)
    assert session.events[-2:] == [Colored(X, "exercised"), Colored(Y, "forcedDepletion")]


def test_load_trace_rejects_bad_seq():
    with pytest.raises(ValueError):
        load_trace('{"event":"ticked","now":1,"seq":3}\n')


# ---------------------------------------------------------------------------
# transition invariants over random license sets and step sequences
# ---------------------------------------------------------------------------

steps_strategy = st.lists(st.integers(0, 10), max_size=8)


@settings(max_examples=200)
@given(license_sets(), steps_strategy, st.sampled_from([choose_baseline, choose_labeled]))
def test_transition_invariants(lics, picks, choose):
    s = installed(*lics)
    granted = set().union(*(l.rights for l in lics)) if lics else set()
    assert set(s.coloring) == granted
    for pick in picks:
        options = steps_from(s)
        step = options[pick % len(options)]
        after, decision = apply_step(s, step, choose)
        # determinism
        assert apply_step(s, step, choose) == (after, decision)
        # coloring domain, monotone coloring, counts stay non-negative, time monotone
        assert set(after.coloring) == granted
        assert all(after.coloring[r] is Color.BLACK for r in s.coloring if s.coloring[r] is Color.BLACK)
        assert all(v >= 0 for v in after.constraints.remaining.values())
        assert after.now >= s.now
        if step.kind == "tick":
            assert (after.licenses, after.constraints, after.coloring) == (s.licenses, s.constraints, s.coloring)
        elif decision is None:
            assert after == s
        else:
            assert step.right in decision.blackened
            assert after.now == s.now and after.licenses == s.licenses
            changed = {k for k in set(s.constraints.remaining) | set(s.constraints.first_use)
                       if s.constraints.remaining.get(k) != after.constraints.remaining.get(k)
                       or s.constraints.first_use.get(k) != after.constraints.first_use.get(k)}
            assert all(k[0] == decision.chosen for k in changed)
            # depleted <=> chosen license serves nothing afterwards, at any later tick
            chosen = after.license(decision.chosen)
            later = [after, tick(after), tick(tick(after))]
            serves = any(decision.chosen in usable(t, r) for t in later for r in chosen.rights)
            assert decision.depleted is not serves
        s = after


def _reachable_from(s0, choose, depth):
    frontier, seen = {s0}, {s0}
    for _ in range(depth):
        nxt = set()
        for s in frontier:
            for step in steps_from(s):
                after, _ = apply_step(s, step, choose)
                if after not in seen:
                    seen.add(after)
                    nxt.add(after)
        frontier = nxt
    return seen


@pytest.mark.parametrize("choose", [choose_baseline, choose_labeled])
def test_lost_rights_sound_on_small_instances(choose):
    from drmlab.verifier import generate_corpus

    checked = 0
    for instance in list(generate_corpus((2, 2, 1, 2, 2, 3)))[::5]:
        for s in _reachable_from(instance.initial_state(), choose, 2):
            lost = lost_rights(s)
            if not lost:
                continue
            for later in _reachable_from(s, choose, 4):
                assert not (lost & permission_set(later.licenses, later.constraints, later.now))
                checked += 1
    assert checked > 0
