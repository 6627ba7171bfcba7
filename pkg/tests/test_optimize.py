import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bousscontrol.grid import build_domain
from bousscontrol.optimize import (bang_bang_control, conditional_gradient_solve, control_measure,
                                   optimality_residual, project_admissible, projected_gradient_solve,
                                   switching_report)
from bousscontrol.state import ControlPair, CostWeights, TimeGrid

from conftest import make_problem

BOUNDS = (0.1, 0.3, 0.1, 0.5)


@pytest.fixture(scope="module")
def small():
    d = build_domain(1, 1, 4, 4)
    tg = TimeGrid(0.1, 3)
    return d, tg, ControlPair.constant(d, tg, 0.2, 0.3, bounds=BOUNDS)


def test_projection_clips_and_is_idempotent(small):
    d, tg, v = small
    raw = v.with_values(np.zeros_like(v.v1), np.full_like(v.v2, 9.0))
    p = project_admissible(raw)
    assert np.all(p.v1 == 0.1) and np.all(p.v2 == 0.5)
    pp = project_admissible(p)
    np.testing.assert_array_equal(pp.flat(), p.flat())
    np.testing.assert_array_equal(project_admissible(v).flat(), v.flat())
    with pytest.raises(ValueError):
        project_admissible(ControlPair(v.v1, v.v2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 20))
def test_projection_nonexpansive_max_norm(seed):
    d = build_domain(1, 1, 4, 4)
    tg = TimeGrid(0.1, 2)
    rng = np.random.default_rng(seed)
    tmpl = ControlPair.constant(d, tg, 0.2, 0.3, bounds=BOUNDS)
    a = tmpl.with_values(rng.uniform(-1, 1, tmpl.v1.shape), rng.uniform(-1, 1, tmpl.v2.shape))
    b = tmpl.with_values(rng.uniform(-1, 1, tmpl.v1.shape), rng.uniform(-1, 1, tmpl.v2.shape))
    pa, pb = project_admissible(a), project_admissible(b)
    assert np.abs(pa.flat() - pb.flat()).max() <= np.abs(a.flat() - b.flat()).max() + 1e-15


def test_bang_bang_rules(small):
    d, tg, v = small
    s1 = np.ones_like(v.v1)
    s2 = -np.ones_like(v.v2)
    bb = bang_bang_control(s1, s2, v)
    assert np.all(bb.v1 == 0.3) and np.all(bb.v2 == 0.1)
    mid = bang_bang_control(0 * s1, 0 * s2, v)
    assert np.allclose(mid.v1, 0.2) and np.allclose(mid.v2, 0.3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 20))
def test_residual_properties(seed):
    d = build_domain(1, 1, 4, 4)
    tg = TimeGrid(0.1, 2)
    rng = np.random.default_rng(seed)
    tmpl = ControlPair.constant(d, tg, 0.2, 0.3, bounds=BOUNDS)
    w = CostWeights.constant(d, tg, 1.5, 0.5)
    m = control_measure(d, tg)
    s1, s2 = rng.standard_normal(tmpl.v1.shape), rng.standard_normal(tmpl.v2.shape)
    v = tmpl.with_values(rng.uniform(0.1, 0.3, tmpl.v1.shape), rng.uniform(0.1, 0.5, tmpl.v2.shape))
    assert optimality_residual(v, s1, s2, w, m) >= 0
    assert optimality_residual(v, 0 * s1, 0 * s2, w, m) == 0
    assert optimality_residual(bang_bang_control(s1, s2, tmpl), s1, s2, w, m) == 0
    anti = bang_bang_control(-s1, -s2, tmpl)
    expected = 1.5 * np.sum(m[0] * np.abs(s1) * 0.2) + 0.5 * np.sum(m[1] * np.abs(s2) * 0.4)
    assert optimality_residual(anti, s1, s2, w, m) == pytest.approx(expected, rel=1e-12)


def test_switching_report_zero_and_random(small):
    d, tg, v = small
    rep = switching_report((np.zeros_like(v.v1), np.zeros_like(v.v2)), v)
    assert rep["s1"]["tie"] == 1.0 and rep["s2"]["tie"] == 1.0
    assert not rep["bang_bang_verified"]
    rng = np.random.default_rng(0)
    s = (rng.standard_normal(v.v1.shape), rng.standard_normal(v.v2.shape))
    rnd = v.with_values(rng.uniform(0.1, 0.3, v.v1.shape), rng.uniform(0.1, 0.5, v.v2.shape))
    assert switching_report(s, rnd)["agreement"] < 1.0
    assert switching_report(s, bang_bang_control(*s, v))["agreement"] == 1.0


@pytest.fixture(scope="module")
def pg_run(default_setup):
    cfg, prob, v0 = default_setup
    return projected_gradient_solve(prob, v0)


def test_projected_gradient_default(pg_run):
    rep = pg_run
    assert rep.converged and rep.n_iter <= 200
    assert rep.residual[-1] <= 1e-6 * rep.residual[0]
    assert np.all(np.diff(rep.J) <= 0)
    assert rep.switching["bang_bang_verified"] and rep.switching["agreement"] == 1.0
    assert all(r >= 0 for r in rep.residual)


def test_conditional_gradient_agrees(default_setup, pg_run):
    cfg, prob, v0 = default_setup
    rep = conditional_gradient_solve(prob, v0)
    assert rep.converged
    assert all(r >= 0 for r in rep.residual)
    assert rep.J_final == pytest.approx(pg_run.J_final, rel=1e-10)
    m = np.concatenate([a.ravel() for a in control_measure(prob.domain, prob.time)])
    assert np.sum(m * np.abs(rep.controls.flat() - pg_run.controls.flat())) <= 1e-10


def test_fixed_point_stops_immediately(default_setup, pg_run):
    cfg, prob, v0 = default_setup
    rep = projected_gradient_solve(prob, pg_run.controls, tol_abs=1e-14)
    assert rep.n_iter == 0 and rep.converged


def test_linear_case():
    cfg, prob = make_problem("physics.beta=0", "cost.r1=0", "cost.objective_form=\"flux\"")
    v0 = cfg.initial_controls(prob.domain, prob.time)
    pg = projected_gradient_solve(prob, v0)
    assert pg.converged and pg.n_iter <= 3
    assert np.all(pg.controls.v2 == 0.5)
    fw = conditional_gradient_solve(prob, v0)
    assert fw.converged and fw.n_iter == 1
    assert np.all(fw.controls.v2 == 0.5)
    # s1 vanishes identically: the tie rule puts v1 at the midpoint
    assert np.allclose(fw.controls.v1, 0.2)


def test_convergence_csv(pg_run, tmp_path):
    path = pg_run.write_convergence_csv(tmp_path / "conv.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iter", "J", "residual", "step_size", "frac_lower", "frac_upper", "frac_interior"]
    assert len(rows) == pg_run.n_iter + 2
    last = [float(x) for x in rows[-1][4:]]
    assert sum(last) == pytest.approx(1.0) and last[2] == 0.0


def test_inadmissible_start_rejected(default_setup):
    cfg, prob, v0 = default_setup
    with pytest.raises(ValueError):
        projected_gradient_solve(prob, v0, x0=np.zeros(v0.flat().size))
