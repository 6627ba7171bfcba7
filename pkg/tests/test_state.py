import json

import numpy as np
import pytest

from bousscontrol.forms import DiscreteForms, PhysicalParams, random_admissible_velocity
from bousscontrol.grid import GAMMA1, ScalarField, VelocityField, build_domain, normal_trace
from bousscontrol.state import (CFLError, ControlPair, CostWeights, Stepper, TimeGrid, cfl_limit, evaluate_cost,
                                solve_forward, step_state, write_checkpoint)

NOBUOY = PhysicalParams(nu=0.05, k=0.05, beta=0.0)


def _inlet_outlet(d, nt, hi=0.3, lo=0.1):
    v1 = np.where(d.faces.side[d.gamma1] == "left", hi, lo)
    return ControlPair(np.tile(v1, (nt, 1)), np.zeros((nt, len(d.gamma2))))


def test_equal_pressures_give_no_flow(dom8):
    tg = TimeGrid(0.4, 20)
    c = ControlPair.constant(dom8, tg, v1=0.3, v2=0.0)
    tr = solve_forward(VelocityField.zeros(dom8), ScalarField.zeros(dom8), c, NOBUOY, tg)
    assert np.abs(tr.z).max() < 1e-14
    np.testing.assert_allclose(tr.P[1:], 0.3, atol=1e-12)


def test_pressure_drop_drives_outflow(dom8):
    tg = TimeGrid(0.4, 20)
    tr = solve_forward(VelocityField.zeros(dom8), ScalarField.zeros(dom8), _inlet_outlet(dom8, 20), NOBUOY, tg)
    nt = normal_trace(tr.velocity(20), GAMMA1).values
    left = dom8.faces.side[dom8.gamma1] == "left"
    assert np.all(nt[left] < 0) and np.all(nt[~left] > 0)
    assert tr.max_div.max() <= 1e-10


def test_energy_decays_without_forcing(dom8, rng):
    z0 = random_admissible_velocity(dom8, rng, smooth=True)
    z0 = VelocityField.from_vector(dom8, 0.5 * z0.vector() / np.abs(z0.vector()).max())
    w0 = dom8.sample_scalar(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    tg = TimeGrid(1.0, 100)
    tr = solve_forward(z0, w0, ControlPair.constant(dom8, tg), NOBUOY, tg)
    assert np.all(np.diff(tr.kinetic) <= 0)
    assert np.all(np.diff(tr.thermal) <= 0)
    assert tr.kinetic[-1] < tr.kinetic[0]


def test_cfl_violation_raises_and_can_be_disabled(dom8):
    tg = TimeGrid(2.0, 4)
    c = ControlPair.constant(dom8, tg)
    with pytest.raises(CFLError):
        solve_forward(VelocityField.zeros(dom8), ScalarField.zeros(dom8), c, NOBUOY, tg)
    tr = solve_forward(VelocityField.zeros(dom8), ScalarField.zeros(dom8), c, NOBUOY, tg, check_cfl=False)
    assert np.all(tr.cfl > 1)
    assert cfl_limit(dom8, NOBUOY, 0.0) == pytest.approx(0.5 * (1 / 8) ** 2 / (4 * 0.05))


def test_nondivergent_initial_velocity_is_projected(dom8, rng):
    tg = TimeGrid(0.1, 5)
    z0 = VelocityField.from_vector(dom8, rng.standard_normal(dom8.n_vel) * 0.1)
    tr = solve_forward(z0, ScalarField.zeros(dom8), ControlPair.constant(dom8, tg), NOBUOY, tg)
    assert np.abs(dom8.ops.D @ tr.z[0]).max() <= 1e-12


def test_bounds_enforced():
    d = build_domain(1, 1, 4, 4)
    tg = TimeGrid(0.1, 2)
    with pytest.raises(ValueError, match=r"\(1.3\)"):
        ControlPair.constant(d, tg, 0.2, 0.2, bounds=(0.3, 0.1, 0.1, 0.5))
    with pytest.raises(ValueError, match=r"\(1.4\)"):
        ControlPair.constant(d, tg, 0.2, 0.2, bounds=(0.1, 0.3, 0.0, 0.5))
    c = ControlPair.constant(d, tg, 0.5, 0.2, bounds=(0.1, 0.3, 0.1, 0.5))
    with pytest.raises(ValueError, match="admissible"):
        solve_forward(VelocityField.zeros(d), ScalarField.zeros(d), c, NOBUOY, tg)


def test_cost_of_zero_weights_is_zero(dom8):
    tg = TimeGrid(0.2, 10)
    c = _inlet_outlet(dom8, 10)
    tr = solve_forward(VelocityField.zeros(dom8), ScalarField.zeros(dom8), c, PhysicalParams(), tg)
    assert evaluate_cost(tr, c, CostWeights.constant(dom8, tg)) == 0.0


def test_flux_cost_is_closed_form(dom8):
    tg = TimeGrid(0.2, 10)
    c = ControlPair.constant(dom8, tg, 0.2, 0.4)
    tr = solve_forward(VelocityField.zeros(dom8), ScalarField.zeros(dom8), c, PhysicalParams(), tg)
    w = CostWeights.constant(dom8, tg, 1.0, 2.0, 0.0, 1.0, "flux")
    # N2 * T * |Gamma2| * r2 * (-v2 / k)
    assert evaluate_cost(tr, c, w) == pytest.approx(2.0 * 0.2 * 2.0 * (-0.4 / 0.05), rel=1e-12)


def test_step_state_matches_stepper(dom8, rng):
    f = DiscreteForms(dom8, PhysicalParams())
    z = random_admissible_velocity(dom8, rng, smooth=True)
    w = ScalarField(dom8, rng.standard_normal((8, 8)))
    z1, w1, P = step_state(z, w, 0.2, 0.3, f.params, 0.01, forms=f)
    zz, ww, PP = Stepper(f, 0.01).step(z.vector(), w.vector(), np.full(16, 0.2), np.full(16, 0.3))
    np.testing.assert_array_equal(z1.vector(), zz)
    np.testing.assert_array_equal(w1.vector(), ww)


def test_checkpoint_files(dom8, tmp_path):
    tg = TimeGrid(0.02, 1)
    c = ControlPair.constant(dom8, tg, 0.2, 0.3)
    tr = solve_forward(VelocityField.zeros(dom8), ScalarField.zeros(dom8), c, PhysicalParams(), tg)
    man = json.loads(write_checkpoint(tr, tmp_path).read_text())
    assert man["steps"] == 1 and len(man["files"]) == 2 * 4 + 2
    assert all((tmp_path / f).exists() for f in man["files"])
