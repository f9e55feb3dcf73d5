import pytest

from libblank.ir import BasicBlock, Branch, Call, FunctionDef, Param, Program
from libblank.metrics import recount_accuracy, replay_log
from libblank.pipeline import train_for_mode
from libblank.planner import plan_program
from libblank.profiler import (LibEnter, LibExit, SiteReached, TraceError, TrainingSummary,
                               build_profile)
from libblank.runtime import (STATIC_LABEL, Audit, Blank, CleanReplayOracle, Copy, Fault, Hit,
                              Kind, LoaderState, Mispredict, Mode, Policy, Predict, Region,
                              Return, Simulator, Verdict, audit, check_invariants,
                              inject_attack_jump, sim_event_from_json, sim_event_to_json,
                              simulate)

from conftest import lib_fn
from test_profiler import MALLOC_TRACE


def call(site, args, chain, snap=None):
    """Site event followed by a nested walk: chain[0] calls chain[1] calls ..."""
    evs = [SiteReached(site, tuple(args), snap)]
    evs += [LibEnter(f) for f in chain]
    evs += [LibExit(f) for f in reversed(chain)]
    return evs


@pytest.fixture
def branchy():
    """parse(x) calls grow only when x > 3; main also calls the straight-line close."""
    app = FunctionDef(0, "main", 0, (BasicBlock(0, (Call(1, 10, (Param(0),)),
                                                    Call(2, 12, (Param(0),))), ()),),
                      is_library=False)
    parse = FunctionDef(10, "parse", 0, (
        BasicBlock(0, (Branch(Param(0)),), (1, 2)),
        BasicBlock(1, (Call(100, 11, (Param(0),)),), (2,)),
        BasicBlock(2, (), ())), gadget_count=4)
    return Program.of([app, parse, lib_fn(11, "grow", gadget_count=6),
                       lib_fn(12, "close", gadget_count=1),
                       lib_fn(13, "tiny", size_bytes=4, blankable=False, gadget_count=2),
                       lib_fn(14, "unused", gadget_count=9)])


def branchy_oracle():
    return CleanReplayOracle({10: [Region(((None, 3),), (10,), (10,), True),
                                   Region(((3, None),), (10, 11), (10, 11), True)]}, 250.0)


def trained(program, trace, mode=Mode.SET):
    plans = plan_program(program)
    prof = build_profile(trace, plans)
    model = train_for_mode(prof, mode)
    return model, TrainingSummary(prof.chains, prof.sequences, frozenset(prof.sites)), plans


def run(program, train, test, policy=Policy(), oracle=None):
    model, summary, plans = trained(program, train, policy.mode)
    return simulate(program, test, model, summary, plans, policy, oracle)


def test_malloc_then_free_event_log(malloc_program):
    report, log = run(malloc_program, MALLOC_TRACE, MALLOC_TRACE)
    assert log == [
        Predict(1, STATIC_LABEL, (10, 11)), Copy(10), Copy(11), Hit(10), Hit(11), Return(1),
        Blank((10, 11)), Predict(2, STATIC_LABEL, (12,)), Copy(12), Hit(12), Return(2)]
    assert report.accuracy == 100 and report.c_max == 2
    assert report.max_exposed_functions == 3          # memcpy stays resident


def test_lazy_blanking_keeps_repeated_prediction(malloc_program):
    trace = MALLOC_TRACE[:5] * 2
    _, log = run(malloc_program, MALLOC_TRACE, trace)
    assert not any(isinstance(e, Blank) for e in log)
    assert log.count(Copy(10)) == 1


def test_eager_blanking_after_return(malloc_program):
    _, log = run(malloc_program, MALLOC_TRACE, MALLOC_TRACE[:5] * 2,
                 Policy(lazy_blanking=False))
    assert log[5:7] == [Return(1), Blank((10, 11))] and log.count(Copy(10)) == 2


def test_tree_prediction_for_divergent_callee(branchy):
    train = call(1, [1], [10]) + call(1, [5], [10, 11])
    report, log = run(branchy, train, train, oracle=branchy_oracle())
    preds = [e for e in log if isinstance(e, Predict)]
    assert [p.fns for p in preds] == [(10,), (10, 11)]
    assert report.accuracy == 100


def test_underprediction_is_legal_when_replay_agrees(branchy):
    train = call(1, [1], [10]) + call(1, [2], [10])
    report, log = run(branchy, train, call(1, [5], [10, 11]), oracle=branchy_oracle())
    i = log.index(Mispredict(11, 1, Kind.UNDER))
    assert log[i + 1] == Audit(10, Verdict.LEGAL, 250.0)
    assert log[i + 2] == Copy(11)
    assert report.total.underpredictions == 1 and report.attacks_detected == 0
    assert report.audits["Legal"] == 1


def test_tampered_snapshot_is_attack(branchy):
    train = call(1, [1], [10]) + call(1, [5], [10, 11])
    # snapshot says 1 but the library ran with 5
    report, log = run(branchy, train, call(1, [5], [10, 11], snap=[1]), oracle=branchy_oracle())
    assert Audit(10, Verdict.ATTACK, 250.0) in log
    assert report.attacks_detected == 1


def test_overprediction_counted(branchy):
    train = call(1, [5], [10, 11])
    report, log = run(branchy, train, call(1, [5], [10]))
    assert Mispredict(11, 1, Kind.OVER) in log
    assert report.total.overpredictions == 1 and report.accuracy == 0


def test_missing_oracle_gives_unknown(branchy):
    train = call(1, [1], [10])
    report, _ = run(branchy, train, call(1, [5], [10, 11]))
    assert report.audits["Unknown"] == 1


def test_audit_rules():
    ref = CleanReplayOracle({7: [Region(((None, 10),), (7, 8), (7, 8, 8), True),
                                 Region(((10, None),), (7, 9), (7, 9), False)]}, 3.0)
    assert audit(7, (5,), (7, 8), (7,), ref) == (Verdict.LEGAL, 3.0)
    assert audit(7, (5,), (7, 9), (7,), ref)[0] is Verdict.ATTACK
    assert audit(7, (5,), (7, 9), (7, 8), ref)[0] is Verdict.ATTACK
    assert audit(7, (11,), (7, 9), (7,), ref)[0] is Verdict.ATTACK
    assert audit(8, (1,), (8,), (), ref)[0] is Verdict.UNKNOWN
    assert audit(7, (5,), (7, 8), (), ref, Mode.FULL_CHAIN)[0] is Verdict.ATTACK
    assert audit(7, (5,), (7, 8, 8), (), ref, Mode.FULL_CHAIN, 9.0) == (Verdict.LEGAL, 9.0)
    assert CleanReplayOracle.from_json(ref.to_json()).to_json() == ref.to_json()


def test_region_bounds_are_half_open():
    r = Region(((1, 4),), (), (), True)
    assert not r.contains((1,)) and r.contains((4,)) and not r.contains(())


def test_loader_state_idempotent():
    st = LoaderState(frozenset({9}))
    assert st.copy(3) and not st.copy(3) and not st.copy(9)
    assert st.blank([3, 4]) == (3,) and st.blank([3]) == ()
    assert st.exposed() == {9}


def test_attack_jumps_fault_outside_prediction(branchy):
    train = call(1, [1], [10]) + call(1, [5], [10, 11])
    test = call(1, [1], [10])
    jumps = tuple((1, f) for f in (10, 11, 12, 13, 14))
    report, log = run(branchy, train, test, Policy(attack_jumps=jumps))
    assert [e for e in log if isinstance(e, (Hit, Fault)) and e.fn != 10 or isinstance(e, Fault)] \
        == [Fault(11), Fault(12), Hit(13), Fault(14)]
    assert report.faults == 3


def test_jump_sweep_matches_loaded_set():
    st = LoaderState(frozenset({1}), loaded={2})
    assert [type(inject_attack_jump(st, f)) for f in (1, 2, 3)] == [Hit, Hit, Fault]


def test_full_chain_keeps_one_function_loaded(branchy):
    train = call(1, [5], [10, 11]) + call(2, [0], [12])
    policy = Policy(mode=Mode.FULL_CHAIN)
    report, log = run(branchy, train, train, policy)
    assert check_invariants(log, branchy.permanent_ids, policy) == []
    assert report.c_max == 1 and report.accuracy == 100
    assert Copy(10) in log and Copy(11) in log


def test_full_chain_sequence_mismatch_is_underprediction(branchy):
    train = call(1, [1], [10])
    report, _ = run(branchy, train, call(1, [5], [10, 11]), Policy(mode=Mode.FULL_CHAIN),
                    branchy_oracle())
    assert report.total.underpredictions == 1 and report.audits["Legal"] == 1


def test_invariants_hold_and_detect_corruption(branchy):
    train = call(1, [1], [10]) + call(1, [5], [10, 11]) + call(2, [0], [12])
    report, log = run(branchy, train, train + call(1, [7], [10, 11]))
    assert report.invariant_violations == 0
    assert check_invariants(log, branchy.permanent_ids, Policy()) == []
    bad = log + [Copy(14)]
    assert check_invariants(bad, branchy.permanent_ids, Policy())
    assert check_invariants([Blank((3,))], frozenset(), Policy())
    assert check_invariants([Copy(1), Copy(2)], frozenset(), Policy(mode=Mode.FULL_CHAIN))


def test_accuracy_recount_and_exposure_agree(branchy):
    train = call(1, [1], [10]) + call(2, [0], [12])
    test = train + call(1, [5], [10, 11]) + call(1, [9], [10, 11]) + call(2, [0], [12])
    report, log = run(branchy, train, test, oracle=branchy_oracle())
    counts = recount_accuracy(log)
    for site, st in report.per_site.items():
        assert counts[site] == (st.calls, st.underpredictions + st.overpredictions)
    rep = replay_log(branchy, log)
    assert rep.c_max == report.c_max
    assert len(rep.max_exposed_set) == report.max_exposed_functions
    assert set(rep.worst_gadget_set) == set(report.worst_case_gadget_set)


def test_unknown_site_policies(branchy):
    train = call(1, [1], [10]) + call(1, [5], [10, 11])
    test = call(2, [0], [12])
    model, summary, plans = trained(branchy, train)
    # close is non-divergent, so force the tree path through a divergent callee at an unseen site
    summary = summary._replace(sites=frozenset())
    _, log = simulate(branchy, call(1, [5], [10, 11]), model, summary, plans)
    assert log[0].fns == (10, 11)
    _, log = simulate(branchy, call(1, [5], [10, 11]), model, summary, plans,
                      Policy(unknown_site="empty"))
    assert log[0].fns == ()
    _, log = simulate(branchy, test, model, summary, plans)
    assert log[0].fns == (12,)


def test_policy_validation():
    with pytest.raises(NotImplementedError):
        Policy(on_alarm="kill")
    with pytest.raises(ValueError):
        Policy(unknown_site="guess")


def test_malformed_test_trace(branchy):
    model, summary, plans = trained(branchy, call(1, [1], [10]))
    with pytest.raises(TraceError):
        simulate(branchy, [LibEnter(10), LibExit(10)], model, summary, plans)
    with pytest.raises(TraceError):
        simulate(branchy, [SiteReached(1, (1,)), LibEnter(10)], model, summary, plans)


def test_step_by_step_matches_batch(branchy):
    train = call(1, [1], [10]) + call(1, [5], [10, 11])
    model, summary, plans = trained(branchy, train)
    sim = Simulator(branchy, model, summary, plans)
    sim.run(train, until=3)
    assert sim.log[0] == Predict(1, sim.log[0].label, (10,))
    _, full = simulate(branchy, train, model, summary, plans)
    assert full[:len(sim.log)] == sim.log


def test_event_json_round_trip(branchy):
    train = call(1, [1], [10])
    _, log = run(branchy, train, call(1, [5], [10, 11]), oracle=branchy_oracle())
    assert [sim_event_from_json(sim_event_to_json(e)) for e in log] == log


def test_bad_event_json():
    from libblank.ir import SchemaError
    for bad in ({"ev": "copy"}, {"ev": "teleport"}, {"ev": "audit", "fn": 1, "verdict": "Maybe",
                                                    "latency_us": 0}):
        with pytest.raises(SchemaError):
            sim_event_from_json(bad)
