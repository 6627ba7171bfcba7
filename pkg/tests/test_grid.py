import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bousscontrol.grid import (GAMMA1, GAMMA2, BoundaryFunction, GridError, ScalarField, VelocityField,
                               build_domain, curl2d, divergence, inner_product, normal_trace,
                               project_divergence_free, read_boundary_csv, scalar_trace, write_boundary_csv,
                               write_field_csv)


def test_default_partition_counts(dom8):
    assert len(dom8.gamma1) == 16 and len(dom8.gamma2) == 16
    assert set(dom8.faces.side[dom8.gamma1]) == {"left", "right"}
    assert set(dom8.faces.side[dom8.gamma2]) == {"bottom", "top"}


def test_partition_mapping_and_errors():
    d = build_domain(1, 1, 4, 6, {"top": 1})
    assert len(d.gamma1) == 2 * 6 + 4
    with pytest.raises(GridError, match="integers >= 4"):
        build_domain(1, 1, 3, 8)
    with pytest.raises(GridError, match="Γ₂ empty"):
        build_domain(1, 1, 4, 4, {"bottom": 1, "top": 1})
    with pytest.raises(GridError):
        build_domain(1, 1, 4, 4, {"front": 1})


def test_divergence_of_linear_field(dom8):
    z = dom8.sample_velocity(lambda x, y: x, lambda x, y: 0 * x)
    np.testing.assert_allclose(divergence(z).values, 1.0, atol=1e-12)


def test_curl_of_rotation(dom8):
    z = dom8.sample_velocity(lambda x, y: -y, lambda x, y: x)
    np.testing.assert_allclose(curl2d(z, closure="extrapolate"), 2.0, atol=1e-12)
    np.testing.assert_allclose(curl2d(z)[1:-1, 1:-1], 2.0, atol=1e-12)


def test_projection_is_divergence_free_and_idempotent(dom8, rng):
    z = VelocityField.from_vector(dom8, rng.standard_normal(dom8.n_vel))
    p = project_divergence_free(z)
    assert np.abs(divergence(p).values).max() <= 1e-12
    assert p.is_admissible()
    np.testing.assert_allclose(project_divergence_free(p).vector(), p.vector(), atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(nx=st.integers(4, 12), ny=st.integers(4, 12), seed=st.integers(0, 2 ** 16))
def test_projection_any_grid(nx, ny, seed):
    d = build_domain(1.0, 1.5, nx, ny)
    z = VelocityField.from_vector(d, np.random.default_rng(seed).standard_normal(d.n_vel))
    assert np.abs(divergence(project_divergence_free(z)).values).max() <= 1e-10


def test_inner_product_and_traces(dom8):
    one = ScalarField(dom8, np.ones((8, 8)))
    assert inner_product(one, one) == pytest.approx(1.0)
    tr = scalar_trace(one, GAMMA2)
    assert tr.values.shape == (16,)
    z = dom8.sample_velocity(lambda x, y: 1 + 0 * x, lambda x, y: 0 * x)
    nt = normal_trace(z, GAMMA1)
    left = dom8.faces.side[dom8.gamma1] == "left"
    np.testing.assert_allclose(nt.values[left], -1.0)
    np.testing.assert_allclose(nt.values[~left], 1.0)


def test_shape_errors(dom8):
    with pytest.raises(GridError):
        VelocityField(dom8, np.zeros((8, 8)), np.zeros((8, 9)))
    with pytest.raises(GridError):
        ScalarField(dom8, np.zeros((9, 8)))
    with pytest.raises(GridError):
        BoundaryFunction(dom8, GAMMA2, np.zeros(5))


def test_csv_roundtrip(dom8, tmp_path, rng):
    vals = rng.standard_normal((3, 16))
    bf = BoundaryFunction(dom8, GAMMA2, vals, times=np.array([0.1, 0.2, 0.3]))
    path = write_boundary_csv(tmp_path / "b.csv", bf)
    back = read_boundary_csv(path, dom8, GAMMA2)
    np.testing.assert_array_equal(back.values, vals)
    f = write_field_csv(tmp_path / "w.csv", ScalarField(dom8, rng.standard_normal((8, 8))))
    lines = f.read_text().splitlines()
    assert lines[0] == "i,j,x,y,value" and len(lines) == 65
