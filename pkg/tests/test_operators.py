import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2cspde.geometry import build_grid, build_quadrature, periodic_distance, PointCloud, sample_point_cloud
from d2cspde.operators import (
    CoefficientField,
    GraphOperator,
    SpectralOperator,
    assemble_fd_operator,
    assemble_graph_operator,
    continuum_operator_torus,
    eigendecompose,
    export_spectrum_csv,
    fd_eigenvalue_closed_form,
    fractional_apply,
    kernel_normalization,
    resolvent_apply,
    semigroup_apply,
    semigroup_matrix,
    unit_ball_volume,
    weight_matrix,
)


def diag_op(lams, n=None):
    """Spectral operator whose eigenvectors are scaled unit vectors."""
    lams = np.asarray(lams, dtype=float)
    n = len(lams) if n is None else n
    return SpectralOperator(lams, math.sqrt(n) * np.eye(n)[:, : len(lams)])


def test_ball_volume_and_normalization():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert kernel_normalization(1) == pytest.approx(3.0)


def test_weight_matrix_values():
    cloud = PointCloud(m=1, nodes=np.array([[0.1], [0.3], [0.6], [0.95]]))
    W = weight_matrix(cloud, 0.3)
    nz = W.entries[W.entries != 0]
    np.testing.assert_allclose(nz, 3 / (4 * 0.3**3))
    assert nz[0] == pytest.approx(27.7778, abs=1e-4)
    assert np.array_equal(W.entries, W.entries.T)


def test_weight_matrix_empty_kernel_and_range():
    cloud = PointCloud(m=1, nodes=np.array([[0.1], [0.5], [0.8]]))
    W = weight_matrix(cloud, 0.05)
    assert np.all(W.entries[~np.eye(3, dtype=bool)] == 0)
    with pytest.raises(ValueError):
        weight_matrix(cloud, 0.5)
    with pytest.raises(ValueError):
        weight_matrix(cloud, 0.0)


def test_weight_matrix_symmetric_random():
    cloud = sample_point_cloud(2, 60, 4)
    W = weight_matrix(cloud, 0.2)
    assert np.array_equal(W.entries, W.entries.T)


def test_graph_operator_kills_constants_and_mass_term():
    cloud = sample_point_cloud(1, 30, 2)
    W = weight_matrix(cloud, 0.2)
    L = assemble_graph_operator(W, CoefficientField(), cloud.nodes)
    np.testing.assert_allclose(L.apply(np.ones(30)), 0, atol=1e-9)
    M = assemble_graph_operator(W, CoefficientField(tau=1.0, kappa=0.0), cloud.nodes)
    u = np.random.default_rng(0).standard_normal(30)
    np.testing.assert_allclose(M.apply(u), u)


def test_graph_operator_double_loop():
    cloud = sample_point_cloud(1, 3, 9)
    W = weight_matrix(cloud, 0.45)
    tau = lambda x: 1.0 + x[:, 0]
    kappa = lambda x: 2.0 + np.sin(2 * np.pi * x[:, 0])
    L = assemble_graph_operator(W, CoefficientField(tau=tau, kappa=kappa), cloud.nodes)
    u = np.array([0.3, -1.2, 2.0])
    x = cloud.nodes
    t, k = tau(x), kappa(x)
    ref = np.zeros(3)
    for i in range(3):
        ref[i] = t[i] * u[i]
        for j in range(3):
            ref[i] += W.entries[i, j] * math.sqrt(k[i] * k[j]) * (u[i] - u[j])
    np.testing.assert_allclose(L.apply(u), ref, rtol=1e-12)


def test_graph_operator_rejects_negative_kappa():
    cloud = sample_point_cloud(1, 5, 0)
    W = weight_matrix(cloud, 0.3)
    with pytest.raises(ValueError):
        assemble_graph_operator(W, CoefficientField(kappa=-1.0), cloud.nodes)


def test_fd_stencil():
    L = assemble_fd_operator(build_grid(1, 4))
    np.testing.assert_allclose(L.apply(np.array([1.0, 0, 0, 0])), 16 * np.array([2, -1, 0, -1]))
    np.testing.assert_allclose(L.apply(np.ones(4)), 0)


def test_fd_2d_stencil():
    L = assemble_fd_operator(build_grid(2, 4)).matrix
    assert np.allclose(L, L.T)
    # n^(2/m) = k^2 = 16 per neighbour, four neighbours
    assert L[0, 0] == pytest.approx(4 * 16)
    assert np.allclose(L.sum(axis=1), 0)


def test_fd_eigenvalues_small():
    op = eigendecompose(assemble_fd_operator(build_grid(1, 4)))
    np.testing.assert_allclose(op.eigenvalues, [0, 32, 32, 64], atol=1e-12)
    assert fd_eigenvalue_closed_form(4, 2) == pytest.approx(32)


@pytest.mark.parametrize("n", [3, 8, 17, 64, 256])
def test_fd_spectrum_closed_form(n):
    op = eigendecompose(assemble_fd_operator(build_grid(1, n)))
    closed = np.array([fd_eigenvalue_closed_form(n, j) for j in range(1, n + 1)])
    np.testing.assert_allclose(op.eigenvalues, closed, rtol=1e-8, atol=1e-8 * closed.max())


def test_eigendecompose_normalization_and_reconstruction():
    cloud = sample_point_cloud(1, 80, 5)
    L = assemble_graph_operator(weight_matrix(cloud, 0.15), CoefficientField(tau=0.5), cloud.nodes)
    op = eigendecompose(L)
    V = op.eigenvectors
    np.testing.assert_allclose(np.mean(V**2, axis=0), 1, atol=1e-10)
    np.testing.assert_allclose(V.T @ V / 80, np.eye(80), atol=1e-8)
    assert np.all(np.diff(op.eigenvalues) >= 0)
    u = np.random.default_rng(1).standard_normal(80)
    np.testing.assert_allclose(fractional_apply(op, 1.0, u), L.apply(u), rtol=1e-8, atol=1e-8 * np.abs(L.apply(u)).max())


def test_eigendecompose_rejects_broken_operator():
    with pytest.raises(ValueError):
        eigendecompose(GraphOperator(np.diag([1.0, -1.0]), "finite-difference"))
    with pytest.raises(ValueError):
        eigendecompose(GraphOperator(np.array([[1.0, 2.0], [0.0, 1.0]]), "finite-difference"))


def test_kernel_operator_is_three_times_fd_on_grid():
    g = build_grid(1, 32)
    W = weight_matrix(g, 1 / 32)
    L = assemble_graph_operator(W, CoefficientField(), g.nodes).matrix
    np.testing.assert_allclose(L, 3 * assemble_fd_operator(g).matrix, rtol=1e-12, atol=1e-9)


def test_continuum_modes_1d():
    quad = build_quadrature(1, 512)
    op = continuum_operator_torus(1, 9, quad)
    assert op.eigenvalues[0] == 0
    np.testing.assert_allclose(op.eigenvectors[:, 0], 1)
    assert op.eigenvalues[1] == pytest.approx(4 * math.pi**2)
    assert 4 * math.pi**2 == pytest.approx(39.4784, abs=1e-4)
    x = quad.nodes[:, 0]
    np.testing.assert_allclose(op.eigenvectors[:, 1], math.sqrt(2) * np.sin(2 * np.pi * x))
    np.testing.assert_allclose(op.eigenvectors[:, 2], math.sqrt(2) * np.cos(2 * np.pi * x))
    G = op.eigenvectors.T @ op.eigenvectors / quad.size
    np.testing.assert_allclose(G, np.eye(9), atol=1e-10)


def test_continuum_modes_2d_multiplicity():
    op = continuum_operator_torus(2, 9, build_quadrature(2, 32))
    assert op.eigenvalues[0] == 0
    np.testing.assert_allclose(op.eigenvalues[1:5], 4 * math.pi**2)
    assert op.eigenvalues[5] == pytest.approx(8 * math.pi**2)
    G = op.eigenvectors.T @ op.eigenvectors / 32**2
    np.testing.assert_allclose(G, np.eye(9), atol=1e-10)


def test_weyl_ratio():
    op = continuum_operator_torus(1, 64, build_quadrature(1, 256))
    j = np.arange(2, 65)
    r = op.eigenvalues[1:] / j**2
    assert np.all((r >= math.pi**2 / 4) & (r <= math.pi**2 * (1 + 1e-12)))


def test_fractional_apply_examples():
    op = diag_op([0.0, 4.0, 9.0])
    u = op.eigenvectors[:, 1]
    np.testing.assert_allclose(fractional_apply(op, 0.5, u), 2 * u)
    z = op.eigenvectors[:, 0]
    np.testing.assert_allclose(fractional_apply(op, 0.5, z), 0)
    w = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(fractional_apply(op, 0.0, w), w)
    with pytest.raises(ValueError):
        fractional_apply(op, -1.0, w)


def test_resolvent_examples():
    op = diag_op([0.0, 3.0, 5.0])
    u = np.random.default_rng(2).standard_normal(3)
    np.testing.assert_allclose(resolvent_apply(op, 0.0, u), u)
    e = op.eigenvectors[:, 1]
    np.testing.assert_allclose(resolvent_apply(op, 1.0, e), e / 4)
    np.testing.assert_allclose(resolvent_apply(op, 2.0, u), resolvent_apply(op, 1.0, resolvent_apply(op, 1.0, u)))
    with pytest.raises(ValueError):
        resolvent_apply(op, -0.5, u)


def test_semigroup_examples():
    op = diag_op([0.0, 2.0, 7.0])
    u = np.random.default_rng(3).standard_normal(3)
    np.testing.assert_allclose(semigroup_apply(op, 0.0, u), u)
    e = op.eigenvectors[:, 1]
    np.testing.assert_allclose(semigroup_apply(op, 1.0, e), math.exp(-2) * e)
    with pytest.raises(ValueError):
        semigroup_apply(op, -1.0, u)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2), st.floats(0, 2), st.integers(0, 2**31))
def test_semigroup_law_and_contraction(t, s, seed):
    op = eigendecompose(assemble_fd_operator(build_grid(1, 16)), s=0.8)
    u = np.random.default_rng(seed).standard_normal(16)
    lhs = semigroup_apply(op, t, semigroup_apply(op, s, u))
    np.testing.assert_allclose(lhs, semigroup_apply(op, t + s, u), atol=1e-10)
    assert np.sqrt(np.mean(semigroup_apply(op, t, u) ** 2)) <= np.sqrt(np.mean(u**2)) + 1e-12


@pytest.mark.parametrize("t", [1e-4, 1e-2, 0.1, 1.0])
def test_fd_semigroup_sup_contraction(t):
    op = eigendecompose(assemble_fd_operator(build_grid(1, 64)))
    rng = np.random.default_rng(7)
    S = semigroup_matrix(op, t)
    for _ in range(20):
        u = rng.uniform(-1, 1, 64)
        u /= np.abs(u).max()
        assert np.abs(S @ u).max() <= 1 + 1e-8


def test_export_spectrum(tmp_path):
    op = eigendecompose(assemble_fd_operator(build_grid(1, 4)), s=0.5)
    export_spectrum_csv(op, tmp_path / "spec.csv")
    lines = (tmp_path / "spec.csv").read_text().splitlines()
    assert lines[:2] == ["# schema=1", "j,lambda,lambda_s"]
    assert len([ln for ln in lines if ln and ln[0].isdigit()]) == 4


def test_fingerprint_tracks_eigenvalues():
    a = diag_op([0.0, 1.0])
    b = diag_op([0.0, 1.0 + 1e-15])
    assert a.fingerprint() == diag_op([0.0, 1.0]).fingerprint()
    assert a.fingerprint() != b.fingerprint()


def test_periodic_weight_pattern_matches_distance():
    cloud = sample_point_cloud(1, 40, 8)
    W = weight_matrix(cloud, 0.1)
    d = periodic_distance(cloud.nodes[:, None, :], cloud.nodes[None, :, :])
    assert np.array_equal(W.entries > 0, d <= 0.1)
