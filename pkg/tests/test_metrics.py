import math

import numpy as np
import pytest

from onlinemep import graph, metrics, problem
from onlinemep.engine import RunTrace, StepSchedule, run_exact
from onlinemep.geometry import Box
from onlinemep.metrics import (MetricSeries, certificate_check, consensus_errors,
                               discounted_step_sums, dynamic_regret, path_length, violation)


def handmade_trace(x, y=None, algorithm="exact"):
    x = np.asarray(x, dtype=float)
    T1, n, m = x.shape
    y = np.zeros((T1, n, 1)) if y is None else np.asarray(y, dtype=float)
    sched = StepSchedule.time_varying(0.5, 0.4)
    eta = np.array([sched.eta(t) for t in range(T1)])
    return RunTrace(x=x, y=y, z=x[:-1].copy(), grad=np.zeros((T1 - 1, n, m)),
                    g_own=np.zeros((T1 - 1, n, 1)), zeta=eta ** 1.25, eta=eta,
                    instance="hand", algorithm=algorithm, schedule=sched)


def toggling_instance():
    # m = h = 1, g alternating +1, -1 by round
    return problem.builtin_separable(
        lambda i, t, x: 0.0, lambda i, t, x: np.zeros(1), Box([-1.0], [1.0]), n=2,
        g=lambda i, t, x: np.array([(1.0 if t % 2 == 0 else -1.0) / 2]),
        jac_g=lambda i, t, x: np.zeros((1, 1)))


def test_comparator_regret_is_zero(ex1, ex2):
    for inst in (ex1, ex2):
        xs = np.array([np.tile(inst.solution_path(t), (inst.n, 1)) for t in range(30)])
        tr = handmade_trace(xs)
        assert not dynamic_regret(tr, inst, 0).values.any()


def test_regret_requires_path():
    inst = toggling_instance()
    with pytest.raises(metrics.MetricsError, match="SolutionPath"):
        dynamic_regret(handmade_trace(np.zeros((3, 2, 1))), inst, 0)


def test_regret_example1_by_hand(ex1):
    x = np.zeros((2, 6, 1))
    x[:, 0, 0] = [1.0, -1.0]
    tr = handmade_trace(x)
    # -sum_j f_j^t(x, 6 sin t / 7) with f = (j/2)(y^2 - x^2) - 3 (y - x) sin t
    def r(t, xv):
        y = 6 * math.sin(t) / 7
        return -sum(j / 2 * (y * y - xv * xv) - 3 * (y - xv) * math.sin(t) for j in range(1, 7))
    assert dynamic_regret(tr, ex1, 0).values == pytest.approx([r(0, 1.0), r(0, 1.0) + r(1, -1.0)])


def test_violation_examples():
    inst = toggling_instance()
    v = violation(handmade_trace(np.zeros((6, 2, 1))), inst, 0)
    assert list(v.values) == [1.0, 0.0, 1.0, 0.0, 1.0, 0.0]
    feasible = problem.builtin_separable(
        lambda i, t, x: 0.0, lambda i, t, x: np.zeros(1), Box([-1.0], [1.0]), n=2,
        g=lambda i, t, x: np.array([-0.3]), jac_g=lambda i, t, x: np.zeros((1, 1)))
    assert not violation(handmade_trace(np.zeros((5, 2, 1))), feasible, 1).values.any()


def test_over_t_uses_one_at_round_zero():
    s = MetricSeries("r", [4.0, 6.0, 9.0])
    assert list(s.over_t) == [4.0, 6.0, 4.5]
    with pytest.raises(metrics.MetricsError):
        MetricSeries("bad", [1.0, np.nan])


def test_path_length_example1(ex1):
    # sum_{t=0}^{10} (6/7)|sin(t+1) - sin t|, mpmath at 30 digits
    assert path_length(ex1, 10) == pytest.approx(5.7558429452358062925, rel=1e-13)
    const = problem.builtin_separable(lambda i, t, x: 0.0, lambda i, t, x: np.zeros(1),
                                      Box([0.0], [1.0]), n=2)
    assert path_length(const, 50, path=lambda t: np.array([0.5])) == 0.0


def test_path_length_example2_grows_linearly(ex2):
    p100, p200 = path_length(ex2, 100), path_length(ex2, 200)
    assert 0 < p100 < math.inf
    assert p200 / p100 == pytest.approx(2.0, rel=0.15)


def test_consensus_errors_by_hand():
    x = np.array([[[0.0], [2.0]], [[1.0], [1.0]]])
    y = np.array([[[1.0], [3.0]], [[0.0], [0.0]]])
    ex, ey = consensus_errors(handmade_trace(x, y))
    assert list(ex.values) == [1.0, 0.0] and list(ey.values) == [1.0, 0.0]


def test_discounted_sums():
    eta = np.array([1.0, 0.5, 0.25])
    lam = 0.5
    expect = [1.0, 0.5 * 1 + 0.5, 0.25 * 1 + 0.5 * 0.5 + 0.25]
    assert discounted_step_sums(eta, math.log(lam)) == pytest.approx(expect)


def test_certificates_pass_on_example1(ex1, ex1_bounds, ex1_run):
    rep = certificate_check(ex1_run, ex1, graph.example1_graphs(), ex1_bounds)
    assert rep.passed, rep.to_dict()
    names = {c.name for c in rep.checks}
    assert names == {"lemma1_mixing", "lemma3_dual_bound", "step_bound",
                     "lemma5_primal_consensus", "lemma5_dual_consensus",
                     "primal_feasibility", "dual_nonnegativity"}
    for c in rep.checks:
        assert c.margin == pytest.approx(c.bound - c.observed)


def test_injected_dual_violation_fails(ex1, ex1_bounds):
    y = np.zeros((3, 6, 1))
    y[2, 4, 0] = math.sqrt(6) * ex1_bounds.kappa2 + 1.0
    tr = handmade_trace(np.zeros((3, 6, 1)), y)
    rep = certificate_check(tr, ex1, graph.example1_graphs(), ex1_bounds)
    c = rep["lemma3_dual_bound"]
    assert not c.passed and c.margin == pytest.approx(-1.0) and c.round == 2
    assert not rep.passed


def test_zero_run_margins_are_full_bounds():
    inst = problem.builtin_separable(lambda i, t, x: 0.0, lambda i, t, x: np.zeros(1),
                                     Box([-1.0], [1.0]), n=3)
    bounds = problem.estimate_bounds(inst)
    seq = graph.complete_graph(3)
    tr = run_exact(inst, seq, StepSchedule.time_varying(0.5, 0.4), 20)
    rep = certificate_check(tr, inst, seq, bounds)
    for name in ("lemma3_dual_bound", "step_bound", "lemma5_primal_consensus",
                 "lemma5_dual_consensus"):
        c = rep[name]
        assert c.observed == 0.0 and c.margin == c.bound


def test_stochastic_report_skips_exact_only_checks(ex2, ex2_bounds):
    from onlinemep.engine import run_stochastic
    from onlinemep.oracle import NoiseModel
    tr = run_stochastic(ex2, graph.example2_graphs(), StepSchedule.fixed(0.5, 1 / 3, 20, 30), 20,
                        noise=NoiseModel.for_instance(ex2), seed=0)
    names = {c.name for c in certificate_check(tr, ex2, graph.example2_graphs(), ex2_bounds).checks}
    assert "step_bound" not in names and "lemma5_primal_consensus" not in names


def test_regret_over_t_eventually_decreasing(ex1, ex2, ex1_schedule):
    checkpoints = [250, 500, 1000, 2000, 4000]
    for inst, seq in ((ex1, graph.example1_graphs()), (ex2, graph.example2_graphs())):
        tr = run_exact(inst, seq, StepSchedule.time_varying(0.5, 1 / 3), 4000)
        r = metrics.max_over_agents([dynamic_regret(tr, inst, i) for i in range(inst.n)]).over_t
        vals = [r[T] for T in checkpoints]
        assert all(b < a for a, b in zip(vals, vals[1:])), (inst.name, vals)


def test_metrics_csv_format(tmp_path, ex1, ex1_run):
    bundle = metrics.compute_metrics(ex1_run, ex1)
    metrics.write_metrics_csv(bundle, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "round,metric,agent,value,value_over_t"
    assert lines[-1].startswith("2000,path_length,all,")
    assert any(l.startswith("2000,regret,max,") for l in lines)
