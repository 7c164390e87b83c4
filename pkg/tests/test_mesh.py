import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pleig.errors import DegenerateFieldError, InputError
from pleig.mesh import (build_interval_mesh, build_rectangle_mesh, grad_energy,
                        grad_norms, norm_p, normalize_p, p_mean, p_mean_shift, phi_scale,
                        read_field_csv, split_parts, write_field_csv)


def hat(mesh):
    return mesh.field(np.array([0.0, 1.0, 0.0]))


def test_interval_nodes_and_measures():
    m = build_interval_mesh(0.0, 1.0, 4)
    assert np.allclose(m.nodes[:, 0], [0, 0.25, 0.5, 0.75, 1.0])
    assert m.n_elements == 4
    assert np.allclose(m.element_measure, 0.25)
    assert m.boundary_mask.tolist() == [True, False, False, False, True]


def test_interval_lumped_mass_sums_to_length():
    m = build_interval_mesh(-2.0, 2.0, 8)
    assert math.isclose(m.lumped_mass.sum(), 4.0, rel_tol=1e-12)


@pytest.mark.parametrize("args", [(1.0, 1.0, 4), (2.0, 1.0, 4), (0.0, 1.0, 1), (0.0, 1.0, 2.5)])
def test_interval_rejects_bad_input(args):
    with pytest.raises(InputError):
        build_interval_mesh(*args)


def test_rectangle_counts_and_areas():
    m = build_rectangle_mesh(0, 2, 0, 2, 2, 2)
    assert m.n_nodes == 9 and m.n_elements == 8
    assert np.allclose(m.element_measure, 0.5)


def test_rectangle_total_area():
    m = build_rectangle_mesh(-2, 2, -2, 2, 7, 5)
    assert math.isclose(m.element_measure.sum(), 16.0, rel_tol=1e-12)
    assert math.isclose(m.lumped_mass.sum(), 16.0, rel_tol=1e-12)


def test_rectangle_corner_hat_gradient():
    m = build_rectangle_mesh(0, 1, 0, 1, 2, 2)
    corner = 0  # node (0, 0)
    for e, tri in enumerate(m.elements):
        if corner in tri:
            a = list(tri).index(corner)
            g = m.basis_gradients[e, a]
            assert np.isclose(np.abs(g).max(), 2.0)


def test_rectangle_rejects_degenerate():
    with pytest.raises(InputError):
        build_rectangle_mesh(0, 0, 0, 1, 2, 2)
    with pytest.raises(InputError):
        build_rectangle_mesh(0, 1, 0, 1, 1, 2)


@settings(max_examples=25, deadline=None)
@given(x0=st.floats(-5, 5), w=st.floats(0.1, 5), y0=st.floats(-5, 5), h=st.floats(0.1, 5),
       nx=st.integers(2, 9), ny=st.integers(2, 9))
def test_rectangle_invariants(x0, w, y0, h, nx, ny):
    m = build_rectangle_mesh(x0, x0 + w, y0, y0 + h, nx, ny)
    assert math.isclose(m.element_measure.sum(), w * h, rel_tol=1e-12)
    assert math.isclose(m.lumped_mass.sum(), w * h, rel_tol=1e-12)
    assert m.elements.min() >= 0 and m.elements.max() < m.n_nodes
    assert np.all(m.element_measure > 0)
    # partition of unity
    assert np.abs(m.basis_gradients.sum(axis=1)).max() <= 1e-9 * max(nx / w, ny / h)


def test_grad_norms_examples():
    m = build_interval_mesh(0, 1, 2)
    assert np.allclose(grad_norms(hat(m)), 2.0)
    assert np.allclose(grad_norms(m.field(np.full(3, 3.0))), 0.0)
    m = build_interval_mesh(0, 1, 10)
    assert np.allclose(grad_norms(m.interpolate(lambda x: x)), 1.0)


def test_linear_field_gradient_exact_in_2d():
    m = build_rectangle_mesh(-1, 2, 0, 1, 5, 3)
    u = m.interpolate(lambda x, y: 3 * x - 2 * y + 1)
    assert np.allclose(grad_norms(u), math.sqrt(13.0), rtol=1e-12)


def test_norm_and_energy_examples():
    m = build_interval_mesh(0, 1, 2)
    assert math.isclose(norm_p(m.field(np.ones(3)), 3), 1.0)
    assert math.isclose(grad_energy(hat(m), 2), 4.0)
    m = build_interval_mesh(0, 1, 7)
    assert math.isclose(grad_energy(m.interpolate(lambda x: x), 2), 1.0)


def test_norm_rejects_p_le_one():
    m = build_interval_mesh(0, 1, 2)
    with pytest.raises(InputError):
        norm_p(hat(m), 1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(-10, 10).filter(lambda c: abs(c) > 1e-3),
       p=st.floats(1.1, 8))
def test_grad_energy_homogeneous(seed, c, p):
    m = build_rectangle_mesh(0, 1, 0, 2, 4, 3)
    u = m.field(np.random.default_rng(seed).standard_normal(m.n_nodes))
    assert math.isclose(grad_energy(c * u, p), abs(c) ** p * grad_energy(u, p), rel_tol=1e-12)


def test_split_parts_examples():
    m = build_interval_mesh(0, 1, 2)
    plus, minus = split_parts(m.field(np.array([-1.0, 0.0, 2.0])))
    assert plus.values.tolist() == [0, 0, 2]
    assert minus.values.tolist() == [1, 0, 0]
    _, minus = split_parts(m.field(np.array([1.0, 2.0, 3.0])))
    assert not minus.values.any()


def test_split_parts_antisymmetric():
    m = build_interval_mesh(-1, 1, 20)
    plus, minus = split_parts(m.interpolate(lambda x: x ** 3 - 0.5 * x))
    assert math.isclose(norm_p(plus, 3), norm_p(minus, 3), rel_tol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_split_parts_round_trip(seed):
    m = build_interval_mesh(0, 1, 9)
    u = m.field(np.random.default_rng(seed).standard_normal(m.n_nodes))
    plus, minus = split_parts(u)
    assert np.array_equal(plus.values - minus.values, u.values)


def test_normalize_examples():
    m = build_interval_mesh(0, 1, 2)
    assert np.allclose(normalize_p(m.field(np.full(3, 2.0)), 2).values, 1.0)
    h = hat(m)
    assert math.isclose(normalize_p(h, 2).values[1], 1.0 / norm_p(h, 2))
    # lumped: middle node carries mass 1/2, so ||hat||_2 = sqrt(1/2)
    assert math.isclose(norm_p(h, 2), math.sqrt(0.5))
    with pytest.raises(DegenerateFieldError):
        normalize_p(m.field(np.zeros(3)), 2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.floats(1.1, 10))
def test_normalize_gives_unit_norm(seed, p):
    m = build_interval_mesh(0, 3, 6)
    u = normalize_p(m.field(np.random.default_rng(seed).standard_normal(m.n_nodes)), p)
    assert math.isclose(norm_p(u, p), 1.0, rel_tol=1e-12)


def test_energy_of_sine_converges_at_second_order():
    errs = []
    for n in (16, 32, 64):
        m = build_interval_mesh(0, 1, n)
        errs.append(abs(grad_energy(m.interpolate(lambda x: np.sin(np.pi * x)), 2) - np.pi ** 2 / 2))
    rates = [math.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert all(1.9 < r < 2.1 for r in rates)


def test_p_mean_examples():
    m = build_interval_mesh(-1, 1, 10)
    assert math.isclose(p_mean(m.field(np.full(11, -2.0)), 3), -4.0)
    assert abs(p_mean(m.interpolate(lambda x: np.sin(3 * x)), 3.5)) < 1e-15
    u = m.interpolate(lambda x: np.exp(x))
    assert math.isclose(p_mean(u, 2), np.dot(m.lumped_mass, u.values) / 2.0)


def test_p_mean_shift_examples():
    m = build_interval_mesh(-1, 1, 10)
    u = m.interpolate(lambda x: np.exp(x))
    c = u.values - p_mean_shift(u, 2).values
    assert np.allclose(c, np.dot(m.lumped_mass, u.values) / 2.0)
    v = m.interpolate(lambda x: x)
    assert np.allclose(p_mean_shift(v, 3).values, v.values, atol=1e-12)
    # values {0, 1} carried by equal lumped masses (1/6 + 1/3 on each side)
    two_mesh = build_interval_mesh(0, 1, 3)
    w = two_mesh.field(np.array([0.0, 0.0, 1.0, 1.0]))
    shifted = p_mean_shift(w, 3)
    assert math.isclose(w.values[0] - shifted.values[0], 0.5, abs_tol=1e-12)
    assert not p_mean_shift(m.field(np.full(11, 4.0)), 3).values.any()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.floats(1.05, 30))
def test_p_mean_shift_zeroes_the_p_mean(seed, p):
    m = build_rectangle_mesh(0, 1, 0, 1, 4, 4)
    u = m.field(np.random.default_rng(seed).standard_normal(m.n_nodes))
    # absolute 1e-10 for order-one phi_p values, relative beyond
    assert abs(p_mean(p_mean_shift(u, p), p)) <= 1e-10 * phi_scale(u.values, m.lumped_mass, p)


def test_field_csv_round_trip(tmp_path):
    m = build_rectangle_mesh(0, 1, 0, 2, 3, 2)
    u = m.interpolate(lambda x, y: np.sin(x) * np.cos(y) / 3)
    write_field_csv(u, tmp_path / "u.csv")
    coords, vals = read_field_csv(tmp_path / "u.csv")
    assert np.array_equal(coords, m.nodes) and np.array_equal(vals, u.values)
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "x,y,u"


def test_field_shape_checked():
    m = build_interval_mesh(0, 1, 4)
    with pytest.raises(InputError):
        m.field(np.zeros(4))
