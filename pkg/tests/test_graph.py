import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pleig.errors import InputError, PartitionCollapseError
from pleig.graph import (Graph, GraphSolverConfig, apply_p_laplacian, brute_force_rcc,
                         build_epsilon_graph, cut_metrics, graph_from_edges,
                         graph_second_eigenpair, label_agreement, labels_from_cut,
                         p_dirichlet_energy, phi_mean_shift, rayleigh_graph,
                         read_points_csv, solve_graph_p_poisson, threshold_cut,
                         two_blobs, write_labels_csv)
from pleig.mesh import phi_p
from pleig.verify import (bridged_cliques, fiedler_value, random_connected_epsilon_graphs,
                          same_bipartition)


def path(n):
    return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)])


def random_graph(seed, n=9, density=0.5):
    rng = np.random.default_rng(seed)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < density]
    return graph_from_edges(n, edges, rng.uniform(0.5, 2.0, len(edges)))


def test_epsilon_graph_on_a_line():
    g = build_epsilon_graph([[0.0], [0.03], [0.2]], 0.05)
    assert g.n_edges == 1 and (g.edge_i[0], g.edge_j[0]) == (0, 1)
    assert g.degrees.tolist() == [1, 1, 0]
    assert g.disconnected


def test_epsilon_graph_square_corners():
    g = build_epsilon_graph([[0, 0], [1, 0], [1, 1], [0, 1]], 1.0)
    assert g.n_edges == 4 and g.degrees.tolist() == [2, 2, 2, 2]


def test_epsilon_graph_gaussian_weights():
    g = build_epsilon_graph([[0.0], [0.5]], 1.0, weights="gaussian", sigma=0.5)
    assert math.isclose(g.edge_w[0], math.exp(-0.25 / 0.5))


def test_epsilon_graph_block_scan_matches_single_block():
    pts = np.random.default_rng(0).uniform(size=(70, 2))
    a = build_epsilon_graph(pts, 0.2, block=7)
    b = build_epsilon_graph(pts, 0.2, block=1000)
    assert (a.adjacency != b.adjacency).nnz == 0


def test_epsilon_graph_rejects_bad_input():
    with pytest.raises(InputError):
        build_epsilon_graph([[0.0]], 1.0)
    with pytest.raises(InputError):
        build_epsilon_graph([[0.0], [1.0]], 0.0)
    with pytest.raises(InputError):
        build_epsilon_graph([[0.0], [1.0]], 1.0, weights="knn")


def test_graph_invariants():
    g = random_graph(3)
    W = g.adjacency
    assert (W != W.T).nnz == 0 and not W.diagonal().any()
    assert np.allclose(g.degrees, np.asarray(W.sum(axis=1)).ravel(), rtol=1e-12)
    assert np.array_equal(g.node_mass, np.ones(g.n))


def test_graph_rejects_asymmetric_adjacency():
    import scipy.sparse as sp
    with pytest.raises(InputError):
        Graph(sp.csr_matrix(np.array([[0, 1.0], [0, 0]])))
    with pytest.raises(InputError):
        Graph(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 0]])))


def test_p_laplacian_of_path():
    g = path(3)
    out = apply_p_laplacian(g, np.array([0.0, 1.0, 3.0]), 3.0)
    # node 1: phi(1 - 0) + phi(1 - 3) = 1 - 4
    assert np.allclose(out, [-1.0, -3.0, 4.0])


def test_rayleigh_examples():
    g = path(4)
    assert math.isclose(rayleigh_graph(g, np.array([1.0, 1, -1, -1]), 2.0), 1.0)
    assert rayleigh_graph(g, np.full(4, 3.0), 2.5) == 0.0
    with pytest.raises(InputError):
        rayleigh_graph(g, np.zeros(4), 2.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.floats(1.2, 6), c=st.floats(0.1, 10))
def test_rayleigh_scale_invariant_and_nonnegative(seed, p, c):
    g = random_graph(seed)
    f = np.random.default_rng(seed).standard_normal(g.n)
    r = rayleigh_graph(g, f, p)
    assert r >= 0
    assert math.isclose(rayleigh_graph(g, c * f, p), r, rel_tol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.floats(1.5, 6))
def test_operator_is_gradient_of_energy(seed, p):
    g = random_graph(seed)
    rng = np.random.default_rng(seed + 1)
    f, v = rng.standard_normal(g.n), rng.standard_normal(g.n)
    t = 1e-6
    fd = (p_dirichlet_energy(g, f + t * v, p) - p_dirichlet_energy(g, f - t * v, p)) / (2 * t)
    assert math.isclose(fd / p, np.dot(apply_p_laplacian(g, f, p), v), rel_tol=1e-5, abs_tol=1e-9)


def test_rayleigh_zero_iff_componentwise_constant():
    g = graph_from_edges(5, [(0, 1), (1, 2), (3, 4)])
    assert rayleigh_graph(g, np.array([2.0, 2, 2, -1, -1]), 3.0) == 0.0
    assert rayleigh_graph(g, np.array([2.0, 2, 1, -1, -1]), 3.0) > 0.0


@pytest.mark.parametrize("p", [1.3, 2.0, 4.0])
def test_phi_mean_shift(p):
    f = np.random.default_rng(1).standard_normal(11)
    assert abs(np.sum(phi_p(phi_mean_shift(f, p), p))) <= 1e-10


def test_inner_solve_satisfies_equation():
    g = random_graph(7)
    rhs = np.random.default_rng(2).standard_normal(g.n)
    rhs -= rhs.mean()
    f, rep = solve_graph_p_poisson(g, rhs, GraphSolverConfig(p=3.0, inner_max_iter=200))
    assert rep.converged
    assert np.allclose(apply_p_laplacian(g, f, 3.0), rhs, atol=1e-8)


def test_path_of_four():
    lam, f, rep = graph_second_eigenpair(path(4), 2.0)
    assert abs(lam - (2 - math.sqrt(2))) <= 1e-6
    assert rep.converged and rep.invariant_violations == []


def test_sign_flip_symmetry():
    g = random_graph(5)
    _, f, _ = graph_second_eigenpair(g, 2.0)
    _, f_neg, _ = graph_second_eigenpair(g, 2.0, f0=-f)
    assert np.allclose(f_neg, -f, atol=1e-6)


def test_bridged_triangles_split_at_bridge():
    g = bridged_cliques(3)
    _, f, _ = graph_second_eigenpair(g, 2.0)
    assert same_bipartition(6, threshold_cut(f), [0, 1, 2])


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_rayleigh_bound_every_sweep(p):
    g = bridged_cliques(5)
    lam, f, rep = graph_second_eigenpair(g, p)
    assert rep.converged
    assert rep.invariant_violations == []
    assert all(m >= 0 for m in rep.rayleigh_margins)
    assert same_bipartition(g.n, threshold_cut(f), range(5))


def test_weak_energies_agree_at_convergence():
    g = random_graph(11, n=10)
    _, _, rep = graph_second_eigenpair(g, 2.0)
    assert abs(rep.lambda_plus - rep.lambda_minus) <= 1e-6 * rep.lambda2


@pytest.mark.parametrize("k, g", list(enumerate(random_connected_epsilon_graphs(4, seed=5))))
def test_fiedler_match(k, g):
    lam, _, _ = graph_second_eigenpair(g, 2.0)
    assert abs(lam - fiedler_value(g)) <= 1e-4 * fiedler_value(g)


def test_collapse_on_one_signed_start():
    with pytest.raises(PartitionCollapseError):
        graph_second_eigenpair(path(4), 2.0, f0=np.array([1.0, 1.0, 1.0, 1.0 + 1e-300]))


def test_threshold_cut_examples():
    assert threshold_cut([0.5, 0.2, -0.1, -0.7]).tolist() == [0, 1]
    assert threshold_cut([0.5, 0.0, -0.1]).tolist() == [0]
    C = threshold_cut([1.0, 2.0, -2.0, -1.0])
    assert len(C) == 2
    with pytest.raises(InputError):
        threshold_cut([1.0, 2.0, 3.0])
    with pytest.raises(InputError):
        threshold_cut([-1.0, 0.0, -3.0])


def test_cut_metrics_path():
    m = cut_metrics(path(4), [0, 1])
    assert m.cut_value == 1.0 and m.rcc == 0.5 and math.isclose(m.ncc, 1 / 3)
    with pytest.raises(InputError):
        cut_metrics(path(4), [])
    with pytest.raises(InputError):
        cut_metrics(path(4), [0, 1, 2, 3])


def test_brute_force_examples():
    rcc, C = brute_force_rcc(path(4))
    assert rcc == 0.5 and same_bipartition(4, C, [0, 1])
    rcc, C = brute_force_rcc(bridged_cliques(4))
    assert rcc == 0.25 and same_bipartition(8, C, [0, 1, 2, 3])
    with pytest.raises(InputError):
        brute_force_rcc(path(21))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_brute_force_is_a_lower_bound(seed):
    g = random_graph(seed, n=8, density=0.6)
    rcc, _ = brute_force_rcc(g)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        mask = rng.random(8) < 0.5
        if 0 < mask.sum() < 8:
            assert cut_metrics(g, mask).rcc >= rcc - 1e-12


def test_planted_blobs_p2():
    pts, planted = two_blobs(500, seed=0)
    g = build_epsilon_graph(pts, 0.15)
    _, f, rep = graph_second_eigenpair(g, 2.0)
    labels = labels_from_cut(g.n, threshold_cut(f))
    assert label_agreement(labels, planted) >= 0.95


def test_points_csv(tmp_path):
    p = tmp_path / "pts.csv"
    p.write_text("x,y\n0,0\n1,0.5\n")
    assert read_points_csv(p).tolist() == [[0, 0], [1, 0.5]]
    p.write_text("0\n1\n2\n")
    assert read_points_csv(p).shape == (3, 1)
    p.write_text("0,1\n1\n")
    with pytest.raises(InputError):
        read_points_csv(p)
    with pytest.raises(InputError, match="nothere.csv"):
        read_points_csv(tmp_path / "nothere.csv")


def test_labels_csv(tmp_path):
    out = tmp_path / "labels.csv"
    write_labels_csv([0, 1, 1], out)
    assert out.read_text().splitlines() == ["index,label", "0,0", "1,1", "2,1"]
