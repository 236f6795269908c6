"""Projection/lifting between nodal vectors and continuum functions.

Continuum functions are arrays of values on a ``QuadratureGrid``. Lifting
composes a nodal vector with the transport map; projection averages a
function over each transport cell.

Kernels of lifted operators are kept in factored form
``K = sum_j alpha_j f_j (x) f_j``. The continuum resolvent on the 1-d torus
is translation invariant and is kept as a cosine series instead
(``ConvolutionKernel``), which lets the norms below be evaluated with
truncation tails far beyond what the quadrature grid can resolve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import sparse

from .geometry import (
    PointCloud,
    QuadratureGrid,
    TorusGrid,
    TransportMap,
    build_transport_map_grid,
    build_transport_map_voronoi,
    default_quadrature,
)
from .operators import SpectralOperator, semigroup_multiplier


@dataclass(frozen=True, eq=False)
class TransportPair:
    map: TransportMap
    quad: QuadratureGrid
    cell_of: np.ndarray
    counts: np.ndarray
    _avg: sparse.csr_matrix
    anchor: np.ndarray

    @property
    def n(self) -> int:
        return self.map.n

    @property
    def is_grid(self) -> bool:
        return self.map.kind == "grid"


def make_pair(tmap: TransportMap) -> TransportPair:
    quad = tmap.quad
    cell_of = tmap.cell_of
    counts = np.bincount(cell_of, minlength=tmap.n)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise ValueError(f"transport cell {empty} holds no quadrature points; refine the quadrature")
    data = 1.0 / counts[cell_of]
    avg = sparse.csr_matrix((data, (cell_of, np.arange(quad.size))), shape=(tmap.n, quad.size))
    _, anchor = np.unique(cell_of, return_index=True)
    return TransportPair(map=tmap, quad=quad, cell_of=cell_of, counts=counts, _avg=avg, anchor=anchor)


def transport_pair(site: Union[TorusGrid, PointCloud], quad: Optional[QuadratureGrid] = None) -> TransportPair:
    quad = default_quadrature(site) if quad is None else quad
    if isinstance(site, TorusGrid):
        return make_pair(build_transport_map_grid(site, quad))
    return make_pair(build_transport_map_voronoi(site, quad))


def lift(u_n: np.ndarray, pair: TransportPair) -> np.ndarray:
    u_n = np.asarray(u_n, dtype=float)
    if u_n.shape[-1] != pair.n:
        raise ValueError(f"nodal vector has length {u_n.shape[-1]}, expected {pair.n}")
    return u_n[..., pair.cell_of]


def project(u: np.ndarray, pair: TransportPair) -> np.ndarray:
    """Cell averages of a quadrature function (exactly n * int_V u on grids)."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != pair.quad.size:
        raise ValueError(f"function has {u.shape[-1]} quadrature values, expected {pair.quad.size}")
    flat = u.reshape(-1, u.shape[-1])
    # average deviations from one sample per cell, so piecewise-constant
    # input (a lifted vector) comes back without rounding
    base = flat[:, pair.anchor]
    out = base + (pair._avg @ (flat - base[:, pair.cell_of]).T).T
    return out.reshape(u.shape[:-1] + (pair.n,))


def lq_norm(u: np.ndarray, q: float) -> np.ndarray:
    """L^q norm w.r.t. the uniform probability weights on the last axis."""
    a = np.abs(np.asarray(u, dtype=float))
    if math.isinf(q):
        return a.max(axis=-1)
    if q < 1:
        raise ValueError("q must be >= 1")
    if q == 2:
        return np.sqrt(np.mean(a * a, axis=-1))
    return np.mean(a**q, axis=-1) ** (1.0 / q)


def inner(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.mean(np.asarray(u) * np.asarray(v), axis=-1)


# -- kernels ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LiftedKernel:
    """Factored kernel sum_j alphas[j] f_j(x) f_j(y) on a quadrature grid.

    When the factors are lifted eigenvectors of a grid operator, ``nodal``
    keeps the nodal vectors and ``pair`` the transport pair, enabling the
    exact evaluation against a ``ConvolutionKernel``.
    """

    alphas: np.ndarray
    factors: np.ndarray
    quad: QuadratureGrid
    nodal: Optional[np.ndarray] = None
    pair: Optional[TransportPair] = None

    @property
    def n_modes(self) -> int:
        return self.alphas.shape[0]

    def apply(self, u: np.ndarray) -> np.ndarray:
        coeff = np.asarray(u) @ self.factors / self.quad.size
        return (coeff * self.alphas) @ self.factors.T

    def dense(self) -> np.ndarray:
        return (self.factors * self.alphas) @ self.factors.T


@dataclass(frozen=True, eq=False)
class ConvolutionKernel:
    """G(x - y) = a_0 + 2 sum_{k>=1} a_k cos(2 pi k (x - y)) on the 1-d torus.

    In the real eigenbasis this is sum_{j<=J} alpha_j psi_j (x) psi_j with
    J = 2K + 1 modes; ``tail`` is the neglected sum of alpha_j^2.
    """

    coeffs: np.ndarray
    quad: QuadratureGrid
    tail: float = 0.0

    @property
    def n_modes(self) -> int:
        return 2 * (self.coeffs.shape[0] - 1) + 1

    def sq_norm(self) -> float:
        a = self.coeffs
        return float(a[0] ** 2 + 2.0 * np.sum(a[1:] ** 2))

    def profile(self, z: np.ndarray) -> np.ndarray:
        k = np.arange(1, self.coeffs.shape[0])
        z = np.asarray(z, dtype=float)
        return self.coeffs[0] + 2.0 * np.cos(2.0 * np.pi * np.multiply.outer(z, k)) @ self.coeffs[1:]

    def dense(self) -> np.ndarray:
        x = self.quad.nodes[:, 0]
        return self.profile(x[:, None] - x[None, :])


Kernel = Union[LiftedKernel, ConvolutionKernel]


def lifted_resolvent_kernel(op: SpectralOperator, pair: TransportPair, beta: float, J: Optional[int] = None) -> LiftedKernel:
    """Kernel of Lambda (id + A)^(-beta) Pi, or of R^beta for a continuum op."""
    J = op.n_modes if J is None else J
    if J > op.n_modes:
        raise ValueError(f"requested {J} modes but operator has {op.n_modes}")
    alphas = (1.0 + op.powered()[:J]) ** (-beta)
    if op.basis_kind == "continuum":
        if op.n_sites != pair.quad.size:
            raise ValueError("continuum operator is sampled on a different quadrature grid")
        return LiftedKernel(alphas=alphas, factors=op.eigenvectors[:, :J], quad=pair.quad)
    nodal = op.eigenvectors[:, :J]
    return LiftedKernel(alphas=alphas, factors=lift(nodal.T, pair).T, quad=pair.quad, nodal=nodal, pair=pair)


def torus_tail_bound(s: float, beta: float, K: int) -> float:
    """Upper bound on 2 sum_{k>K} (1 + (2 pi k)^(2s))^(-2 beta)."""
    p = 4.0 * s * beta
    if p <= 1.0:
        return math.inf
    return 2.0 * (2.0 * math.pi) ** (-p) * K ** (1.0 - p) / (p - 1.0)


def torus_cutoff_for_tail(s: float, beta: float, tol: float, k_max: int = 20_000_000) -> int:
    p = 4.0 * s * beta
    if p <= 1.0:
        raise ValueError(f"beta={beta} <= m/(4s)={1.0 / (4.0 * s)}: the resolvent is not Hilbert-Schmidt")
    K = max(1, math.ceil((2.0 * (2.0 * math.pi) ** (-p) / ((p - 1.0) * tol)) ** (1.0 / (p - 1.0))))
    while torus_tail_bound(s, beta, K) >= tol:
        K += 1
    if K > k_max:
        raise ValueError(f"tail tolerance {tol} needs {K} frequencies (> {k_max})")
    return K


def torus_resolvent_kernel(s: float, beta: float, quad: QuadratureGrid, J: Optional[int] = None,
                           tail_tol: float = 1e-6) -> ConvolutionKernel:
    """Continuum R^beta on T^1, truncated at J modes or at the tail tolerance."""
    if quad.m != 1:
        raise ValueError("convolution kernels are implemented on the 1-d torus only")
    K = torus_cutoff_for_tail(s, beta, tail_tol) if J is None else (J - 1) // 2
    k = np.arange(K + 1, dtype=float)
    lam_s = (2.0 * np.pi * k) ** (2.0 * s)
    a = (1.0 + lam_s) ** (-beta)
    return ConvolutionKernel(coeffs=a, quad=quad, tail=torus_tail_bound(s, beta, K) if K > 0 else math.inf)


# -- norms --------------------------------------------------------------------


def _check_same_quad(K1: Kernel, K2: Kernel) -> QuadratureGrid:
    q1, q2 = K1.quad, K2.quad
    if q1 is not q2 and (q1.m != q2.m or q1.q_per_axis != q2.q_per_axis):
        raise ValueError("kernels live on different quadrature grids")
    return q1


def _gram_parts(K1: LiftedKernel, K2: LiftedKernel):
    F = np.hstack([K1.factors, K2.factors])
    c = np.concatenate([K1.alphas, -K2.alphas])
    G = F.T @ F / K1.quad.size
    return F, c, G


def _gram_row_sq(K1: LiftedKernel, K2: LiftedKernel) -> np.ndarray:
    F, c, G = _gram_parts(K1, K2)
    Fc = F * c
    return np.maximum(np.sum((Fc @ G) * Fc, axis=1), 0.0)


def _strip_constant_mode(K: LiftedKernel, a0: float):
    """Drop a shared constant mode with equal weight from both kernels."""
    V = K.nodal
    for i in range(V.shape[1]):
        if np.max(np.abs(V[:, i] - 1.0)) < 1e-10 and abs(K.alphas[i] - a0) <= 1e-14 * max(1.0, abs(a0)):
            keep = np.ones(V.shape[1], dtype=bool)
            keep[i] = False
            return V[:, keep], K.alphas[keep], 0.0
    return V, K.alphas, a0


def _folded_cosine_sum(b: np.ndarray, period: int, shift: float = 0.0) -> np.ndarray:
    """Values sum_{k>=1} b_k cos(2 pi k (p + shift) / period) for p = 0..period-1."""
    k = np.arange(1, b.shape[0])
    phase = np.exp(2j * np.pi * k * shift / period) * b[1:]
    idx = k % period
    bins = np.bincount(idx, weights=phase.real, minlength=period) + 1j * np.bincount(idx, weights=phase.imag, minlength=period)
    return np.real(period * np.fft.ifft(bins))


def _exact_parts(K: LiftedKernel, G: ConvolutionKernel):
    pair = K.pair
    if pair is None or not pair.is_grid or pair.quad.m != 1:
        raise ValueError("exact evaluation needs a lifted 1-d grid kernel")
    n, Q = pair.n, pair.quad.size
    if Q % n != 0:
        raise ValueError("quadrature resolution must be a multiple of the grid size")
    a = G.coeffs.copy()
    V, alphas, a[0] = _strip_constant_mode(K, a[0])
    Kn = (V * alphas) @ V.T
    k = np.arange(a.shape[0], dtype=float)
    return n, Q, V, alphas, Kn, a, k


def _exact_row_sq(K: LiftedKernel, G: ConvolutionKernel) -> np.ndarray:
    n, Q, V, alphas, Kn, a, k = _exact_parts(K, G)
    r = Q // n
    cell = K.pair.cell_of
    diag = np.sum(V * V * alphas**2, axis=1)
    first = diag[cell]
    b = a * np.sinc(k / n)
    # h(z) = n * int_cell G(z - u) du sampled at z = x_q - x_c, i.e. offsets (p + 1/2 - r/2)/Q
    h = a[0] + 2.0 * _folded_cosine_sum(b, Q, shift=0.5 - 0.5 * r)
    q = np.arange(Q)
    offs = (q[:, None] - r * np.arange(n)[None, :]) % Q
    cross = np.sum(Kn[cell] * h[offs], axis=1) / n
    return np.maximum(first - 2.0 * cross + (a[0] ** 2 + 2.0 * np.sum(a[1:] ** 2)), 0.0)


def _exact_hs_sq(K: LiftedKernel, G: ConvolutionKernel) -> float:
    n, Q, V, alphas, Kn, a, k = _exact_parts(K, G)
    b = a * np.sinc(k / n) ** 2
    ht = a[0] + 2.0 * _folded_cosine_sum(b, n)
    c = np.arange(n)
    cross = np.sum(Kn * ht[(c[:, None] - c[None, :]) % n]) / n**2
    return max(float(np.sum(alphas**2) - 2.0 * cross + a[0] ** 2 + 2.0 * np.sum(a[1:] ** 2)), 0.0)


def kernel_row_sq(K1: Kernel, K2: Kernel) -> np.ndarray:
    """int (K1 - K2)(x, y)^2 dy at every quadrature point x."""
    quad = _check_same_quad(K1, K2)
    if isinstance(K1, ConvolutionKernel) and isinstance(K2, ConvolutionKernel):
        a, b = K1.coeffs, K2.coeffs
        L = max(a.shape[0], b.shape[0])
        d = np.pad(a, (0, L - a.shape[0])) - np.pad(b, (0, L - b.shape[0]))
        return np.full(quad.size, d[0] ** 2 + 2.0 * np.sum(d[1:] ** 2))
    if isinstance(K1, ConvolutionKernel):
        K1, K2 = K2, K1
    if isinstance(K2, ConvolutionKernel):
        return _exact_row_sq(K1, K2)
    return _gram_row_sq(K1, K2)


def hs_norm_diff(K1: Kernel, K2: Kernel) -> float:
    """Hilbert-Schmidt norm of the difference on L^2 of the torus."""
    _check_same_quad(K1, K2)
    if isinstance(K1, ConvolutionKernel) and isinstance(K2, ConvolutionKernel):
        return float(math.sqrt(kernel_row_sq(K1, K2)[0]))
    if isinstance(K1, ConvolutionKernel):
        K1, K2 = K2, K1
    if isinstance(K2, ConvolutionKernel):
        return math.sqrt(_exact_hs_sq(K1, K2))
    _, c, G = _gram_parts(K1, K2)
    return math.sqrt(max(float(c @ (G * G) @ c), 0.0))


def two_to_infty_norm_diff(K1: Kernel, K2: Kernel) -> float:
    """L^2 -> L^inf norm of the difference: sup_x ||(K1 - K2)(x, .)||_2."""
    return float(math.sqrt(np.max(kernel_row_sq(K1, K2))))


def semigroup_convergence_gap(op_n: SpectralOperator, op_inf: SpectralOperator, pair: TransportPair,
                              x: np.ndarray, t_grid: Sequence[float], q: float = 2.0) -> float:
    """max_t || Lambda S_n(t) Pi x - S_inf(t) x ||_{L^q}."""
    x = np.asarray(x, dtype=float)
    px = project(x, pair)
    cn = op_n.coefficients(px)
    ci = op_inf.coefficients(x) if op_inf.n_sites == x.shape[-1] else None
    gap = 0.0
    for t in t_grid:
        sn = lift(op_n.synthesize(cn * semigroup_multiplier(op_n, t)), pair)
        if t == 0:
            si = x
        else:
            if ci is None:
                raise ValueError("continuum operator is sampled on a different quadrature grid")
            si = op_inf.synthesize(ci * semigroup_multiplier(op_inf, t))
        gap = max(gap, float(lq_norm(sn - si, q)))
    return gap
