"""Noise, stochastic convolutions and time stepping in a spectral basis.

All state is kept as coefficients against the eigenvectors of a
``SpectralOperator`` (one column per mode). Arrays carry a leading path
axis: increments have shape (paths, K, J), trajectories (paths, K + 1, N).

Wiener increments come from counter-based substreams keyed by
(seed, path, mode), so any subset of paths or modes can be regenerated
without drawing the rest.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.signal import fftconvolve

from .lifting import TransportPair, project
from .operators import SpectralOperator

DEFAULT_R_MAX = 1e6


# -- noise --------------------------------------------------------------------


def substream(seed: int, path: int, mode: int) -> np.random.Generator:
    """Philox generator keyed by (seed, path, mode)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path), int(mode)))
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))


@dataclass(frozen=True, eq=False)
class WienerRepresentation:
    """Truncated cylindrical Wiener increments on a uniform time grid.

    ``increments[p, k, j]`` is the increment of the j-th driving Brownian
    motion over [t_k, t_{k+1}] for path ``first_path + p``.
    """

    J: int
    T: float
    K: int
    seed: int
    basis_kind: str
    increments: np.ndarray
    first_path: int = 0

    @property
    def dt(self) -> float:
        return self.T / self.K

    @property
    def paths(self) -> int:
        return self.increments.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.K + 1)

    def increment(self, path: int, j: int, k: int) -> float:
        """Regenerate a single increment from its substream."""
        row = substream(self.seed, path, j).standard_normal(self.K)
        return float(row[k] * math.sqrt(self.dt))

    def manifest(self) -> dict:
        return {
            "noise_seed": self.seed,
            "noise_J": self.J,
            "noise_K": self.K,
            "noise_T": self.T,
            "noise_basis": self.basis_kind,
            "noise_paths": self.paths,
            "noise_first_path": self.first_path,
        }

    def fingerprint(self) -> str:
        h = hashlib.sha256(repr(sorted(self.manifest().items())).encode())
        h.update(np.ascontiguousarray(self.increments, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def generate_noise(J: int, T: float, K: int, seed: int, basis_kind: str = "discrete",
                   paths: int = 1, first_path: int = 0) -> WienerRepresentation:
    if J < 1 or K < 1:
        raise ValueError("need J >= 1 modes and K >= 1 steps")
    if T <= 0:
        raise ValueError("horizon must be positive")
    if basis_kind not in ("discrete", "continuum"):
        raise ValueError(f"unknown basis kind {basis_kind!r}")
    sd = math.sqrt(T / K)
    inc = np.empty((paths, K, J))
    for p in range(paths):
        for j in range(J):
            inc[p, :, j] = substream(seed, first_path + p, j).standard_normal(K)
    inc *= sd
    inc.setflags(write=False)
    return WienerRepresentation(J=J, T=float(T), K=K, seed=int(seed), basis_kind=basis_kind,
                                increments=inc, first_path=first_path)


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` steps (same Brownian path, coarser grid)."""
    P, K, J = increments.shape
    if K % factor:
        raise ValueError(f"{K} steps are not divisible by {factor}")
    return increments.reshape(P, K // factor, factor, J).sum(axis=2)


def mixing_matrix(pair: TransportPair, op_n: SpectralOperator, op_inf: SpectralOperator,
                  J: Optional[int] = None) -> np.ndarray:
    """M[i, j] = <Pi psi_inf^(j), psi_n^(i)> in L^2 of the node measure."""
    J = op_inf.n_modes if J is None else J
    if J > op_inf.n_modes:
        raise ValueError(f"noise uses {J} modes but only {op_inf.n_modes} continuum modes are available")
    if op_inf.n_sites != pair.quad.size:
        raise ValueError("continuum modes are sampled on a different quadrature grid")
    P = project(op_inf.eigenvectors[:, :J].T, pair)  # (J, n)
    return op_n.eigenvectors.T @ P.T / op_n.n_sites


def project_noise(noise: Union[WienerRepresentation, np.ndarray], pair: TransportPair,
                  op_n: SpectralOperator, op_inf: SpectralOperator,
                  mixing: Optional[np.ndarray] = None) -> np.ndarray:
    """Increments of Pi W in the eigenbasis of ``op_n``; shape (paths, K, n)."""
    inc = noise.increments if isinstance(noise, WienerRepresentation) else np.asarray(noise)
    if isinstance(noise, WienerRepresentation) and noise.basis_kind != "continuum":
        raise ValueError("project_noise expects continuum-basis noise")
    M = mixing_matrix(pair, op_n, op_inf, inc.shape[-1]) if mixing is None else mixing
    return inc @ M.T


# -- drifts -------------------------------------------------------------------


@dataclass(frozen=True)
class NemytskiiDrift:
    """Pointwise drift f(t, x) with f(x) = sum_j coeffs[j] x^j or a callable.

    Polynomial drifts must have odd degree 2k+1 and a negative leading
    coefficient; constant coefficients only.
    """

    kind: str
    coeffs: tuple = ()
    func: Optional[Callable] = None
    lipschitz: Optional[float] = None

    def __post_init__(self):
        if self.kind == "polynomial":
            if len(self.coeffs) < 2 or len(self.coeffs) % 2 != 0:
                raise ValueError("polynomial drift must have odd degree 2k+1")
            if not self.coeffs[-1] < 0:
                raise ValueError("leading coefficient must be negative (dissipative drift)")
        elif self.kind == "lipschitz":
            if self.func is None or self.lipschitz is None or self.lipschitz < 0:
                raise ValueError("Lipschitz drift needs a function and a nonnegative constant")
        else:
            raise ValueError(f"unknown drift kind {self.kind!r}")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> float:
        """a_{2k+1} > 0 in f = -a_{2k+1} x^{2k+1} + ..."""
        return -self.coeffs[-1]

    def __call__(self, t: float, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "lipschitz":
            return np.asarray(self.func(t, u), dtype=float)
        out = np.full_like(u, self.coeffs[-1])
        for c in reversed(self.coeffs[:-1]):
            out = out * u + c
        return out


def allen_cahn_drift() -> NemytskiiDrift:
    """f(x) = x - x^3."""
    return NemytskiiDrift(kind="polynomial", coeffs=(0.0, 1.0, 0.0, -1.0))


def polynomial_drift(coeffs: Sequence[float]) -> NemytskiiDrift:
    return NemytskiiDrift(kind="polynomial", coeffs=tuple(float(c) for c in coeffs))


def lipschitz_drift(func: Callable, lipschitz: float) -> NemytskiiDrift:
    return NemytskiiDrift(kind="lipschitz", func=func, lipschitz=float(lipschitz))


def nemytskii_apply(drift: NemytskiiDrift, t: float, u_nodal: np.ndarray) -> np.ndarray:
    return drift(t, u_nodal)


# -- problems and solutions ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpdeProblem:
    operator: SpectralOperator
    xi: np.ndarray
    T: float
    K: int
    drift: Optional[NemytskiiDrift] = None
    noise_mode: str = "independent"
    scheme: str = "A"
    r_max: float = DEFAULT_R_MAX

    def __post_init__(self):
        if self.T <= 0 or self.K < 1:
            raise ValueError("need T > 0 and K >= 1")
        if not np.all(np.isfinite(self.xi)):
            raise ValueError("initial datum must be finite")
        if self.noise_mode not in ("independent", "coupled"):
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")
        if self.scheme not in ("A", "B"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "B" and self.noise_mode == "coupled":
            raise ValueError("exact-variance scheme B needs independent per-mode noise")

    @property
    def dt(self) -> float:
        return self.T / self.K


@dataclass(eq=False)
class PathSolution:
    times: np.ndarray
    values: np.ndarray
    kind: str
    scheme: str
    blown_up: np.ndarray = field(default=None)
    blowup_step: np.ndarray = field(default=None)

    def __post_init__(self):
        P = self.values.shape[0]
        if self.blown_up is None:
            self.blown_up = np.zeros(P, dtype=bool)
        if self.blowup_step is None:
            self.blowup_step = np.full(P, -1, dtype=np.int64)

    @property
    def sup_norm(self) -> np.ndarray:
        """sup over time of the max-norm of the stored values, per path."""
        return np.max(np.abs(self.values), axis=(1, 2))


def _increments(noise, K: Optional[int] = None) -> tuple[np.ndarray, Optional[float]]:
    if isinstance(noise, WienerRepresentation):
        return noise.increments, noise.dt
    inc = np.asarray(noise, dtype=float)
    if inc.ndim == 2:
        inc = inc[None]
    return inc, None


def phi1(z: np.ndarray) -> np.ndarray:
    """(1 - e^{-z}) / z with phi1(0) = 1."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = -np.expm1(-z[nz]) / z[nz]
    return out


def ou_step_factors(mu: np.ndarray, dt: float, scheme: str) -> tuple[np.ndarray, np.ndarray]:
    """(decay, noise scale) per mode; noise scale multiplies a N(0, dt) increment."""
    decay = np.exp(-mu * dt)
    if scheme == "A":
        return decay, decay
    var = np.where(mu > 0, -np.expm1(-2.0 * mu * dt) / np.where(mu > 0, 2.0 * mu, 1.0), dt)
    return decay, np.sqrt(var / dt)


def stochastic_convolution(op: SpectralOperator, noise, dt: Optional[float] = None,
                           scheme: str = "A") -> PathSolution:
    """W_A(t_k) per mode by the O(K) recursive OU update.

    Scheme A is the left-point sum sum_{l<k} S((k-l) dt) dW^l; scheme B uses
    the exact OU transition variance (independent noise only).
    """
    inc, ndt = _increments(noise)
    dt = ndt if dt is None else dt
    if dt is None:
        raise ValueError("time step unknown: pass dt or a WienerRepresentation")
    P, K, J = inc.shape
    if J != op.n_modes:
        raise ValueError(f"noise has {J} modes, operator has {op.n_modes}")
    decay, scale = ou_step_factors(op.powered(), dt, scheme)
    out = np.zeros((P, K + 1, J))
    x = np.zeros((P, J))
    for k in range(K):
        x = decay * x + scale * inc[:, k]
        out[:, k + 1] = x
    return PathSolution(times=np.arange(K + 1) * dt, values=out, kind="coefficient", scheme=scheme)


def simulate_ou(problem: SpdeProblem, noise) -> PathSolution:
    """Exact-in-distribution OU transitions (scheme B) or scheme A per problem."""
    if problem.drift is not None:
        raise ValueError("simulate_ou requires a problem without drift")
    inc, _ = _increments(noise)
    op = problem.operator
    decay, scale = ou_step_factors(op.powered(), problem.dt, problem.scheme)
    P, K, J = inc.shape
    if K != problem.K:
        raise ValueError(f"noise has {K} steps, problem has {problem.K}")
    out = np.zeros((P, K + 1, J))
    x = np.broadcast_to(op.coefficients(problem.xi), (P, J)).copy()
    out[:, 0] = x
    for k in range(K):
        x = decay * x + scale * inc[:, k]
        out[:, k + 1] = x
    return PathSolution(times=np.arange(K + 1) * problem.dt, values=out, kind="coefficient", scheme=problem.scheme)


def _causal_conv(x: np.ndarray, kern: np.ndarray) -> np.ndarray:
    """out[:, k] = sum_{r=1..k} kern[r] x[:, k - r] for k = 0..K; x has K steps."""
    P, K, J = x.shape
    full = fftconvolve(x, kern[None, : K + 1], axes=1)
    out = np.zeros((P, K + 1, J))
    out[:, 1:] = full[:, 1 : K + 1]
    return out


def auxiliary_process(op: SpectralOperator, delta: float, noise, dt: Optional[float] = None) -> PathSolution:
    """W^delta(t_k) = Gamma(delta)^-1 sum_{l<k} (t_k - t_l)^(delta-1) S(t_k - t_l) dW^l."""
    if delta <= 0.5:
        raise ValueError(f"auxiliary process needs delta > 1/2, got {delta}")
    inc, ndt = _increments(noise)
    dt = ndt if dt is None else dt
    P, K, J = inc.shape
    r = np.arange(K + 1, dtype=float)
    lag = r * dt
    kern = np.zeros((K + 1, J))
    kern[1:] = (lag[1:, None] ** (delta - 1.0)) * np.exp(-np.outer(lag[1:], op.powered())) / math.gamma(delta)
    if delta == 1.0:
        # kernel is exactly S(t); the recursion avoids FFT round-off
        return stochastic_convolution(op, inc, dt, scheme="A")
    return PathSolution(times=lag, values=_causal_conv(inc, kern), kind="coefficient", scheme="A")


def fractional_integrate(op: SpectralOperator, s_frac: float, f: np.ndarray, dt: float,
                         rule: str = "product") -> np.ndarray:
    """Fractional parabolic integral of a path f sampled at t_0..t_K.

    ``rule="product"`` freezes f at the left endpoint of each subinterval
    and integrates the weight (t_k - r)^(s-1) exactly; ``rule="left"`` also
    evaluates the weight at the left endpoint. The semigroup factor is
    evaluated at t_k - t_l in both rules.
    """
    if s_frac < 0:
        raise ValueError("fractional order must be nonnegative")
    f = np.asarray(f, dtype=float)
    squeeze = f.ndim == 2
    if squeeze:
        f = f[None]
    if s_frac == 0:
        return f[0].copy() if squeeze else f.copy()
    P, K1, J = f.shape
    K = K1 - 1
    r = np.arange(K + 1, dtype=float)
    if rule == "product":
        w = (r[1:] ** s_frac - (r[1:] - 1.0) ** s_frac) * dt**s_frac / math.gamma(s_frac + 1.0)
    elif rule == "left":
        w = (r[1:] * dt) ** (s_frac - 1.0) * dt / math.gamma(s_frac)
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    kern = np.zeros((K + 1, J))
    kern[1:] = w[:, None] * np.exp(-np.outer(r[1:] * dt, op.powered()))
    out = _causal_conv(f[:, :K], kern)
    return out[0] if squeeze else out


def simulate_semilinear(problem: SpdeProblem, noise, store: str = "nodal") -> PathSolution:
    """Exponential Euler with a Nemytskii drift evaluated at the nodes.

    X^{k+1} = S(dt) X^k + phi1(dt A) F(t_k, X^k) dt + dW_A^k. Paths whose
    nodal max-norm exceeds ``r_max`` are flagged and frozen; NaNs abort.
    ``noise`` holds increments in the operator's eigenbasis.
    """
    op = problem.operator
    inc, _ = _increments(noise)
    P, K, J = inc.shape
    if K != problem.K:
        raise ValueError(f"noise has {K} steps, problem has {problem.K}")
    if J != op.n_modes:
        raise ValueError(f"noise has {J} modes, operator has {op.n_modes}")
    dt = problem.dt
    mu = op.powered()
    decay, scale = ou_step_factors(mu, dt, problem.scheme)
    drift_w = phi1(mu * dt) * dt
    V = op.eigenvectors
    N = op.n_sites
    c = np.broadcast_to(op.coefficients(problem.xi), (P, J)).copy()
    width = N if store == "nodal" else J
    out = np.zeros((P, K + 1, width)) if store != "none" else None
    blown = np.zeros(P, dtype=bool)
    first = np.full(P, -1, dtype=np.int64)
    sup = np.zeros(P)
    for k in range(K + 1):
        nodal = c @ V.T
        if np.isnan(nodal[~blown]).any():
            bad = int(np.flatnonzero(np.isnan(nodal).any(axis=1) & ~blown)[0])
            raise FloatingPointError(f"NaN in path {bad} at step {k} (t={k * dt:.6g}); last sup norm {sup[bad]:.6g}")
        amp = np.max(np.abs(nodal), axis=1)
        newly = (amp > problem.r_max) & ~blown
        first[newly] = k
        blown |= newly
        sup = np.where(blown & ~newly, sup, np.maximum(sup, amp))
        if out is not None:
            out[:, k] = nodal if store == "nodal" else c
            if k > 0:
                out[blown & ~newly, k] = out[blown & ~newly, k - 1]
        if k == K:
            break
        step = decay * c + scale * inc[:, k]
        if problem.drift is not None:
            fc = problem.drift(k * dt, nodal) @ V / N
            step = step + drift_w * fc
        c = np.where(blown[:, None], c, step)
    sol = PathSolution(times=np.arange(K + 1) * dt, values=out if out is not None else np.zeros((P, 0, 0)),
                       kind=store, scheme=problem.scheme, blown_up=blown, blowup_step=first)
    sol.path_sup = sup
    return sol
