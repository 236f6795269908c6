"""Graph and finite-difference discretizations of L = tau - div(kappa grad).

Every operator ends up as a ``SpectralOperator``: eigenvalues of the base
operator plus eigenvectors sampled on a set of equally weighted sites (graph
nodes, or quadrature points for the continuum torus). Fractional powers,
resolvents and semigroups are applied through that eigenbasis.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .geometry import (
    PointCloud,
    QuadratureGrid,
    TorusGrid,
    build_quadrature,
    pairwise_periodic_distances,
)

CLAMP_REL = 1e-8
ZERO_SNAP_REL = 1e-11


def unit_ball_volume(m: int) -> float:
    return math.pi ** (m / 2.0) / math.gamma(m / 2.0 + 1.0)


def kernel_normalization(m: int) -> float:
    """2 (m + 2) / nu_m with nu_m the volume of the unit ball in R^m."""
    return 2.0 * (m + 2) / unit_ball_volume(m)


Field = Union[float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class CoefficientField:
    tau: Field = 0.0
    kappa: Field = 1.0

    @staticmethod
    def _eval(f: Field, points: np.ndarray) -> np.ndarray:
        if callable(f):
            return np.asarray(f(points), dtype=float).reshape(points.shape[0])
        return np.full(points.shape[0], float(f))

    def tau_at(self, points: np.ndarray) -> np.ndarray:
        return self._eval(self.tau, points)

    def kappa_at(self, points: np.ndarray) -> np.ndarray:
        return self._eval(self.kappa, points)

    @property
    def is_laplacian(self) -> bool:
        return (not callable(self.tau) and float(self.tau) == 0.0
                and not callable(self.kappa) and float(self.kappa) == 1.0)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    entries: np.ndarray
    h: float
    c_m: float

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class GraphOperator:
    matrix: np.ndarray
    source: str

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def apply(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u) @ self.matrix.T


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Eigenpairs (lambda_j, psi_j) of a base operator and an exponent ``s``.

    ``eigenvectors`` has shape (N, J): column j is psi_j sampled on N equally
    weighted sites and normalized so that mean(psi_j**2) == 1. For the
    continuum torus, ``modes`` holds the (frequency, kind) description of
    each column so it can be re-evaluated at arbitrary points.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    s: float = 1.0
    basis_kind: str = "discrete"
    modes: Optional[tuple] = None

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_sites(self) -> int:
        return self.eigenvectors.shape[0]

    def powered(self, s: Optional[float] = None) -> np.ndarray:
        """lambda^s with the convention 0^s = 0 for s > 0."""
        s = self.s if s is None else s
        lam = self.eigenvalues
        if s == 0:
            return np.ones_like(lam)
        out = np.zeros_like(lam)
        pos = lam > 0
        out[pos] = lam[pos] ** s
        return out

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float) @ self.eigenvectors / self.n_sites

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        return np.asarray(c, dtype=float) @ self.eigenvectors.T

    def apply_multiplier(self, mult: np.ndarray, u: np.ndarray, coefficients: bool = False) -> np.ndarray:
        if coefficients:
            return np.asarray(u, dtype=float) * mult
        return self.synthesize(self.coefficients(u) * mult)

    def with_s(self, s: float) -> "SpectralOperator":
        return SpectralOperator(self.eigenvalues, self.eigenvectors, s, self.basis_kind, self.modes)

    def truncated(self, J: int) -> "SpectralOperator":
        modes = None
        if self.modes is not None:
            modes = tuple(a[:J] for a in self.modes)
        return SpectralOperator(self.eigenvalues[:J], self.eigenvectors[:, :J], self.s, self.basis_kind, modes)

    def fingerprint(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.eigenvalues, dtype="<f8").tobytes()).hexdigest()[:16]


# -- assembly -----------------------------------------------------------------


def weight_matrix(cloud: Union[PointCloud, TorusGrid], h: float) -> WeightMatrix:
    if not (0.0 < h < 0.5):
        raise ValueError(f"connectivity length must lie in (0, 1/2), got {h}")
    m, n = cloud.m, cloud.n
    dist = pairwise_periodic_distances(cloud.nodes)
    c_m = kernel_normalization(m)
    value = c_m / (n * h ** (m + 2))
    # relative slack: grid spacings equal to h must count as neighbours
    W = np.where(dist <= h * (1.0 + 1e-12), value, 0.0)
    return WeightMatrix(entries=W, h=h, c_m=c_m)


def assemble_graph_operator(W: WeightMatrix, coeff: CoefficientField, nodes: np.ndarray) -> GraphOperator:
    nodes = np.asarray(nodes, dtype=float)
    if nodes.shape[0] != W.n:
        raise ValueError(f"weight matrix is {W.n}x{W.n} but {nodes.shape[0]} nodes were given")
    kappa = coeff.kappa_at(nodes)
    if np.any(kappa < 0):
        raise ValueError("kappa evaluated negative at some node")
    tau = coeff.tau_at(nodes)
    sq = np.sqrt(kappa)
    Wk = W.entries * np.outer(sq, sq)
    L = np.diag(tau + Wk.sum(axis=1)) - Wk
    return GraphOperator(matrix=0.5 * (L + L.T), source="kernel-weights")


def assemble_fd_operator(grid: TorusGrid) -> GraphOperator:
    """Periodic (2m+1)-point Laplacian with weight n^(2/m) = k^2 per axis pair."""
    k, m = grid.k, grid.m
    one_d = np.zeros((k, k))
    idx = np.arange(k)
    np.add.at(one_d, (idx, idx), 2.0)
    np.add.at(one_d, (idx, (idx + 1) % k), -1.0)
    np.add.at(one_d, (idx, (idx - 1) % k), -1.0)
    one_d *= k**2
    eye = np.eye(k)
    L = np.zeros((grid.n, grid.n))
    for axis in range(m):
        term = np.ones((1, 1))
        for b in range(m):
            term = np.kron(term, one_d if b == axis else eye)
        L += term
    return GraphOperator(matrix=L, source="finite-difference")


# -- spectra ------------------------------------------------------------------


def eigendecompose(L: GraphOperator, measure: Optional[np.ndarray] = None, s: float = 1.0) -> SpectralOperator:
    """Full eigendecomposition normalized in L^2 of the uniform node measure."""
    A = np.asarray(L.matrix, dtype=float)
    n = A.shape[0]
    if measure is not None and not np.allclose(measure, 1.0 / n, rtol=0, atol=1e-15):
        raise ValueError("only the uniform node measure 1/n is supported")
    if not np.allclose(A, A.T, rtol=0, atol=1e-10 * max(1.0, np.abs(A).max())):
        raise ValueError("operator matrix is not symmetric")
    try:
        lam, vec = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver did not converge: {exc}") from exc
    scale = max(np.abs(lam).max(), 1e-300)
    if lam.min() < -CLAMP_REL * scale:
        raise ValueError(f"eigenvalue {lam.min():.3e} below clamp threshold; operator is not PSD")
    # round-off around a kernel mode is snapped to an exact zero
    lam = np.where(lam < ZERO_SNAP_REL * scale, 0.0, lam)
    order = np.argsort(lam, kind="stable")
    lam, vec = lam[order], vec[:, order]
    vec = vec * math.sqrt(n)
    pivot = np.argmax(np.abs(vec), axis=0)
    signs = np.sign(vec[pivot, np.arange(n)])
    signs[signs == 0] = 1.0
    vec = vec * signs
    return SpectralOperator(eigenvalues=lam, eigenvectors=vec, s=s, basis_kind="discrete")


def torus_mode_1d(j: int) -> tuple[int, int]:
    """(frequency, kind) of the j-th (1-based) 1-d torus mode; kind 0 = cos, 1 = sin."""
    if j < 1:
        raise ValueError("mode index starts at 1")
    if j == 1:
        return 0, 0
    if j % 2 == 0:
        return j // 2, 1
    return (j - 1) // 2, 0


def torus_eigenvalue_1d(j: int) -> float:
    f, _ = torus_mode_1d(j)
    return (2.0 * math.pi * f) ** 2


def torus_modes(m: int, J: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """First J Laplace eigenmodes on T^m, sorted by eigenvalue.

    Returns (eigenvalues, freqs, kinds) with freqs/kinds of shape (J, m).
    Within an eigenvalue cluster, modes are ordered lexicographically by
    their 1-d indices.
    """
    if J < 1:
        raise ValueError("need at least one mode")
    if m == 1:
        fk = np.array([torus_mode_1d(j) for j in range(1, J + 1)])
        lam = (2.0 * np.pi * fk[:, 0]) ** 2
        return lam, fk[:, :1].copy(), fk[:, 1:].copy()
    F = 1
    while True:
        idx1 = np.arange(1, 2 * F + 2)
        fk1 = np.array([torus_mode_1d(j) for j in idx1])
        combos = np.array(np.meshgrid(*([idx1 - 1] * m), indexing="ij")).reshape(m, -1).T
        freqs = fk1[combos, 0]
        kinds = fk1[combos, 1]
        lam = np.sum((2.0 * np.pi * freqs) ** 2, axis=1)
        complete = lam < (2.0 * np.pi * (F + 1)) ** 2 - 1e-9
        if complete.sum() >= J:
            lex = np.lexsort(tuple(combos[:, a] for a in reversed(range(m))))
            order = lex[np.argsort(np.round(lam[lex], 9), kind="stable")]
            order = order[:J]
            return lam[order], freqs[order], kinds[order]
        F *= 2


def torus_eigenfunctions(freqs: np.ndarray, kinds: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate L^2-normalized torus eigenfunctions; returns (len(points), J)."""
    pts = np.asarray(points, dtype=float).reshape(-1, freqs.shape[1])
    out = np.ones((pts.shape[0], freqs.shape[0]))
    for axis in range(freqs.shape[1]):
        arg = 2.0 * np.pi * np.outer(pts[:, axis], freqs[:, axis])
        factor = np.where(kinds[:, axis] == 1, math.sqrt(2.0) * np.sin(arg), math.sqrt(2.0) * np.cos(arg))
        factor = np.where(freqs[:, axis] == 0, 1.0, factor)
        out *= factor
    return out


def continuum_operator_torus(m: int, J: int, quad: Optional[QuadratureGrid] = None, s: float = 1.0) -> SpectralOperator:
    """Closed-form Laplace-Beltrami eigenpairs on T^m sampled on ``quad``."""
    lam, freqs, kinds = torus_modes(m, J)
    if quad is None:
        fmax = int(freqs.max()) if freqs.size else 0
        quad = build_quadrature(m, max(64, 8 * fmax))
    if quad.m != m:
        raise ValueError("quadrature dimension mismatch")
    vec = torus_eigenfunctions(freqs, kinds, quad.nodes)
    return SpectralOperator(eigenvalues=lam, eigenvectors=vec, s=s, basis_kind="continuum", modes=(freqs, kinds))


def fd_eigenvalue_closed_form(n: int, j: int) -> float:
    """4 n^2 sin^2(pi j' / 2n) with j' = j (even) or j - 1 (odd); m = 1."""
    jj = j if j % 2 == 0 else j - 1
    return 4.0 * n**2 * math.sin(math.pi * jj / (2.0 * n)) ** 2


# -- spectral calculus --------------------------------------------------------


def fractional_apply(op: SpectralOperator, s: float, u: np.ndarray, coefficients: bool = False) -> np.ndarray:
    if s < 0:
        raise ValueError("negative powers are only available through resolvent_apply")
    if s == 0:
        return np.array(u, dtype=float, copy=True)
    return op.apply_multiplier(op.powered(s), u, coefficients)


def resolvent_apply(op: SpectralOperator, beta: float, u: np.ndarray, coefficients: bool = False) -> np.ndarray:
    """(id + A)^(-beta) u with A = L^s."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return op.apply_multiplier((1.0 + op.powered()) ** (-beta), u, coefficients)


def semigroup_multiplier(op: SpectralOperator, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    return np.exp(-t * op.powered())


def semigroup_apply(op: SpectralOperator, t: float, u: np.ndarray, coefficients: bool = False) -> np.ndarray:
    return op.apply_multiplier(semigroup_multiplier(op, t), u, coefficients)


def semigroup_matrix(op: SpectralOperator, t: float) -> np.ndarray:
    """Nodal matrix of S(t) (acting on column vectors of nodal values)."""
    V = op.eigenvectors
    return (V * semigroup_multiplier(op, t)) @ V.T / op.n_sites


def export_spectrum_csv(op: SpectralOperator, path) -> None:
    lam_s = op.powered()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# schema=1\nj,lambda,lambda_s\n")
        for j, (a, b) in enumerate(zip(op.eigenvalues, lam_s), start=1):
            fh.write(f"{j},{a:.17g},{b:.17g}\n")


def export_eigenvectors(op: SpectralOperator, path) -> None:
    np.savetxt(path, op.eigenvectors, fmt="%.17g")
