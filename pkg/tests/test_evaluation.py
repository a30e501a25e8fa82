import json
import math

import numpy as np
import pytest

from satgail.controllers import PointingPD, RandomPolicy, ZeroTorque
from satgail.env import EnvConfig
from satgail.evaluation import (TRACE_COLUMNS, AngleTrace, comparison_table, duty_cycle,
                                evaluate_agent, extreme_errors, metrics, plot_traces, rms_error)


def test_ramp_duty_is_half():
    n = 1000
    trace = AngleTrace(np.linspace(0.0, 20.0, n))
    assert abs(duty_cycle(trace) - 0.5) <= 1.0 / n


def test_threshold_is_inclusive():
    assert duty_cycle([10.0, 10.0 + 1e-12]) == 0.5


@pytest.mark.parametrize("c", [0.1, 3.0, 7.25, 179.9])
def test_constant_trace_rms_is_exact(c):
    assert rms_error(np.full(777, c)) == c


def test_alternating_trace_rms():
    assert rms_error(np.tile([0.0, 10.0], 500)) == pytest.approx(7.0711, abs=1e-3)


def test_extremes_and_metrics_dict():
    m = metrics([3.0, 12.0, 8.0, 1.0])
    assert m == {"rms": pytest.approx(math.sqrt((9 + 144 + 64 + 1) / 4)), "duty": 0.75,
                 "max": 12.0, "min": 1.0}
    assert extreme_errors(np.array([5.0])) == (5.0, 5.0)


def test_trace_windows():
    tr = AngleTrace(np.arange(100.0), dt=0.1)
    assert tr.duration == pytest.approx(10.0)
    np.testing.assert_array_equal(tr.last(1.0).theta_deg, np.arange(90.0, 100.0))
    np.testing.assert_array_equal(tr.window(2.0, 3.0).theta_deg, np.arange(20.0, 30.0))
    with pytest.raises(ValueError):
        AngleTrace([])


@pytest.fixture(scope="module")
def pd_report():
    return evaluate_agent(PointingPD(), 1, T=30.0)


def test_six_states_and_trace_length(pd_report):
    assert len(pd_report.per_state) == 6
    for s in pd_report.per_state:
        assert s.trace.theta_deg.size == 300 and len(s.rows) == 300
        assert len(s.rows[0]) == len(TRACE_COLUMNS)
        assert s.rows[0][0] == 0.0


def test_scripted_controller_points_the_antenna():
    rep = evaluate_agent(PointingPD(), 1, T=120.0)
    assert all(s.trace.last(20.0).theta_deg.max() < 10.0 for s in rep.per_state)


def test_random_policy_gets_terminated():
    rep = evaluate_agent(RandomPolicy(0), 1, T=250.0, deterministic=False)
    assert sum(s.terminated_early for s in rep.per_state) >= 4
    assert rep.mean_reward < 0


def test_callable_agent_and_state_subset():
    rep = evaluate_agent(lambda obs: np.zeros(3), 1, T=1.0, states=[0, 3])
    assert [s.init_index for s in rep.per_state] == [0, 3]
    zero = evaluate_agent(ZeroTorque(), 1, T=1.0, states=[0, 3])
    assert rep.average == zero.average


def test_parallel_workers_match_serial():
    cfg = EnvConfig()
    a = evaluate_agent(PointingPD(), 8, T=5.0, env_cfg=cfg)
    b = evaluate_agent(PointingPD(), 8, T=5.0, env_cfg=cfg, workers=2)
    assert a.to_dict() == b.to_dict()


def test_report_files_and_table(pd_report, tmp_path):
    path = pd_report.write(tmp_path)
    data = json.loads(path.read_text())
    assert set(data["average"]) == {"rms", "duty", "max", "min"}
    assert (tmp_path / "exp01_expert_state5_trace.csv").read_text().startswith(",".join(TRACE_COLUMNS))
    table = comparison_table([("Learner", pd_report), ("Expert", pd_report)])
    assert table.splitlines()[0] == "|  | RMS | Duty Cycle | Max (deg) | Min (deg) |"
    assert table.splitlines()[2].startswith("| Learner |")


def test_plot_is_byte_stable(pd_report, tmp_path):
    a = plot_traces(pd_report, tmp_path / "a.svg")
    b = plot_traces(pd_report, tmp_path / "b.svg")
    assert a.read_bytes() == b.read_bytes()
    assert b"<svg" in a.read_bytes()
