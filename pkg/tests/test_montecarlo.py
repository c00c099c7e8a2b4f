import csv
import io
import json
import math

import numpy as np
import pytest

from feedback_bins.dynamics import CountMode, ModelParams, ProcessState
from feedback_bins.montecarlo import (
    RECORD_FIELDS,
    Reference,
    RunOptions,
    TrajectoryRecord,
    Winner,
    certificate_log_tails,
    deviation_thresholds,
    deviation_tracker,
    dominance_stats,
    jsonable,
    limit_distribution_test,
    monopoly_certificate,
    records_csv,
    records_json,
    int_str,
    replication_rng,
    trajectory_csv,
    run_replications,
)
from feedback_bins.sequences import (
    ConstantSequence,
    CustomSequence,
    DoublyExponentialTau,
    GeometricSequence,
)

CONST = ConstantSequence(1, 2)


def exact_state(n, T, tau):
    return ProcessState(n, T, tau, math.log(T), math.log(tau - T), CountMode.EXACT)


def fake_record(theta, rid=0, min_half=None):
    side = min(theta, 1 - theta)
    return TrajectoryRecord(
        rid, 0, 10, theta, math.log(theta), math.log1p(-theta), side, math.log(side),
        side if min_half is None else min_half,
        Winner.BIN1 if theta > 0.5 else Winner.BIN2 if theta < 0.5 else Winner.UNDECIDED,
        0, None, None, None, 0.0, 1.0, 0, 0, 0, None, None, CountMode.EXACT)


# -- determinism ------------------------------------------------------------------


def test_same_seed_identical_records():
    params = ModelParams(2.0, 1, CONST)
    a = run_replications(params, 300, 1, 42)
    b = run_replications(params, 300, 1, 42)
    assert a.records == b.records


def test_independent_of_threads_and_chunking():
    params = ModelParams(2.0, 1, ConstantSequence(3, 4))
    base = run_replications(params, 400, 9, 5, RunOptions(chunk=1024))
    small = run_replications(params, 400, 9, 5, RunOptions(chunk=7))
    assert base.records == small.records
    # force the pool even for a small run
    import feedback_bins.montecarlo as mc
    old = mc.MIN_PARALLEL_STEPS
    mc.MIN_PARALLEL_STEPS = 0
    try:
        pooled = run_replications(params, 400, 9, 5, RunOptions(threads=3))
    finally:
        mc.MIN_PARALLEL_STEPS = old
    assert pooled.records == base.records
    assert pooled.summary == base.summary


def test_streams_are_per_replication():
    a = replication_rng(1, 0).random(4)
    b = replication_rng(1, 1).random(4)
    assert not np.allclose(a, b)
    assert np.array_equal(a, replication_rng(1, 0).random(4))


def test_step_budget_partial():
    params = ModelParams(2.0, 1, CONST)
    res = run_replications(params, 100, 50, 1, RunOptions(max_steps=1000))
    assert res.summary.partial and res.summary.reps == 10
    with pytest.raises(ValueError):
        run_replications(params, 100, 5, 1, RunOptions(max_steps=50))


def test_preconditions():
    params = ModelParams(2.0, 1, CONST)
    with pytest.raises(ValueError):
        run_replications(params, 0, 5, 1)
    with pytest.raises(ValueError):
        run_replications(params, 10, 0, 1)


# -- certificates ------------------------------------------------------------------


def test_certificate_example():
    params = ModelParams(2.0, 1, CONST)
    state = exact_state(998, 1, 1000)  # tau_998 = 1000
    cert = monopoly_certificate(state, params, 1e-2, tail_horizon=2000)
    assert cert is not None
    assert cert.loser_count == 1 and cert.loser_bin == 1
    assert cert.epsilon_bound <= 2 / 999
    assert 0 < cert.epsilon_bound < 1e-2


def test_certificate_threshold_respected():
    params = ModelParams(2.0, 1, CONST)
    state = exact_state(998, 1, 1000)
    assert monopoly_certificate(state, params, 1e-3, tail_horizon=2000) is None


def test_certificate_never_for_divergent_series():
    params = ModelParams(2.0, 1, DoublyExponentialTau(1, 1, 2, base=3))
    assert certificate_log_tails(params.seq, 2.0, 25) is None
    for n in (1, 5, 20):
        s = ProcessState(n, math.inf, math.inf, 0.0, params.seq.log_tau(n), CountMode.FLOAT)
        assert monopoly_certificate(s, params, 0.999, tail_horizon=40) is None


def test_certificate_never_without_tail_bound():
    seq = CustomSequence([1] * 100, 2)
    params = ModelParams(2.0, 1, seq)
    assert monopoly_certificate(exact_state(90, 1, 92), params, 0.5, tail_horizon=99) is None


def test_certificate_monotone_while_frozen():
    params = ModelParams(2.0, 1, GeometricSequence(1, 2, 2))
    prev = math.inf
    for n in range(1, 40):
        tau = params.seq.tau(n)
        cert = monopoly_certificate(exact_state(n, 3, tau), params, 1.0, tail_horizon=60)
        if cert is not None:
            assert cert.epsilon_bound <= prev
            prev = cert.epsilon_bound
    assert prev < 1e-6


def test_engine_tails_match_scalar_certificate():
    params = ModelParams(2.0, 1, GeometricSequence(1, 2, 2))
    tails = certificate_log_tails(params.seq, 2.0, 30, 60)
    for n in (7, 19, 30):
        state = exact_state(n, 1, params.seq.tau(n))
        cert = monopoly_certificate(state, params, 1.0, tail_horizon=60)
        assert cert.log_epsilon_bound == pytest.approx(math.log(2) + tails[n], rel=1e-9)


def test_certificate_requires_nonempty_loser():
    params = ModelParams(2.0, 1, CONST)
    s = ProcessState(5, 0, 7, -math.inf, math.log(7), CountMode.EXACT)
    with pytest.raises(ValueError):
        monopoly_certificate(s, params, 1e-3, 100)


def test_certified_runs_have_no_violations():
    params = ModelParams(2.0, 1, GeometricSequence(1, 2, 2))
    res = run_replications(params, 60, 300, 3)
    certified = [r for r in res.records if r.certificate is not None]
    assert len(certified) > 250
    assert res.summary.certificate_violations <= 2
    for r in certified:
        assert r.monopoly_onset is None or r.monopoly_onset <= r.certificate.at_step


# -- estimators ----------------------------------------------------------------------


def test_dominance_single_record():
    d = dominance_stats([fake_record(0.3)])
    assert d.median_min_side == pytest.approx(0.3)
    assert d.p_below[0.1] == 0.0
    with pytest.raises(ValueError):
        dominance_stats([])


def test_dominance_trend_alpha_two():
    res = run_replications(ModelParams(2.0, 1, CONST), 10_000, 100, 17)
    d = dominance_stats(res.records)
    assert d.median_min_side < d.median_min_side_half and d.trend


def test_alpha_one_p_below():
    res = run_replications(ModelParams(1.0, 1, CONST), 10_000, 2000, 23)
    p = res.summary.p_below[1e-3]
    assert p <= 2e-3 + 4 * math.sqrt(2e-3 / 2000)


def test_winner_symmetry_and_noise_moments():
    reps = 400
    res = run_replications(ModelParams(1.0, 5, ConstantSequence(5, 10)), 1000, reps, 8)
    s = res.summary
    assert abs(s.winner_split["bin1"] - 0.5) <= 4 * math.sqrt(reps) / 2 / reps
    assert abs(s.noise_mean) <= 4 / math.sqrt(s.noise_count)
    assert abs(s.noise_var - 1) <= 0.05


def test_ks_point_mass():
    ks = limit_distribution_test([fake_record(0.5, i) for i in range(50)], Reference.UNIFORM01)
    assert ks.ks_stat == pytest.approx(0.5)


def test_ks_warning_non_classical():
    records = [fake_record(0.25 + 0.5 * i / 99, i) for i in range(100)]
    ks = limit_distribution_test(records, Reference.UNIFORM01, ModelParams(2.0, 1, CONST))
    assert ks.warning is not None
    ks = limit_distribution_test(records, Reference.UNIFORM01, ModelParams(1.0, 1, CONST))
    assert ks.warning is None


def test_two_point_alpha_two():
    res = run_replications(ModelParams(2.0, 1, CONST), 2000, 400, 29)
    ks = limit_distribution_test(res.records, Reference.TWO_POINT_HALF_HALF)
    assert ks.ks_stat <= 4 * 0.5 / math.sqrt(400)


def test_delta_values():
    delta = deviation_thresholds(CONST, 10_001)
    assert delta[10_000] == pytest.approx(0.011787719174716134, rel=1e-12)


def test_deviation_pinned_path():
    path = np.full(200, 0.5)
    summ = deviation_tracker([path], CONST)
    assert summ.per_trajectory[0].count == 0 and summ.fraction_with_deviation == 0


def test_deviation_synthetic_positions():
    path = np.full(50, 0.5)
    path[[3, 40]] = 0.9
    st = deviation_tracker([path], CONST).per_trajectory[0]
    assert st.positions == [3, 40] and st.count_half == 1 and st.growing


def test_deviation_from_records():
    res = run_replications(ModelParams(2.0, 1, CONST), 1000, 50, 31)
    summ = deviation_tracker(res.records)
    assert summ.fraction_with_deviation == 1.0
    with pytest.raises(ValueError):
        deviation_tracker([np.full(3, 0.5)])


# -- serialization -----------------------------------------------------------------


def test_records_csv_and_json():
    res = run_replications(ModelParams(2.0, 1, GeometricSequence(1, 2, 2)), 60, 5, 2)
    text = records_csv(res.records)
    rows = list(csv.DictReader(io.StringIO(text)))
    assert tuple(rows[0]) == RECORD_FIELDS and len(rows) == 5
    for row, rec in zip(rows, res.records):
        assert float(row["final_theta"]) == rec.final_theta  # 17 digits round-trip
    assert records_csv(res.records) == text
    json.dumps(records_json(res.records))
    json.dumps(jsonable(res.summary.to_dict()))


def test_float_mode_summary_notes_switch():
    params = ModelParams(2.0, 1, DoublyExponentialTau(2, 1, 2))
    res = run_replications(params, 25, 20, 4)
    assert res.summary.float_switch_step is not None
    assert all(r.final_mode is CountMode.FLOAT for r in res.records)


def test_trajectory_dump():
    params = ModelParams(2.0, 1, CONST)
    res = run_replications(params, 30, 2, 1, RunOptions(dump_trajectories=True))
    rows = res.trajectories[1]
    assert len(rows) == 30 and rows[-1][0] == 30
    assert rows[-1][2] == 32


def test_serialization_of_huge_and_float_mode_values():
    params = ModelParams(2.0, 1, DoublyExponentialTau(2, 1, 2))
    res = run_replications(params, 25, 1, 1, RunOptions(dump_trajectories=True))
    old = csv.field_size_limit(10**7)
    try:
        rows = list(csv.DictReader(io.StringIO(trajectory_csv(res.trajectories[0]))))
    finally:
        csv.field_size_limit(old)
    exact = [r for r in rows if r["T"]]
    assert max(len(r["tau"]) for r in exact) > 4300  # past the default str() cap
    tau = params.seq.tau(int(exact[-1]["n"]))
    assert exact[-1]["tau"] == int_str(tau)
    assert rows[-1]["T"] == "" and float(rows[-1]["log_tau"]) > 0
    assert jsonable({"k": 2**200})["k"] == str(2**200)
    assert jsonable({"k": 7})["k"] == 7
