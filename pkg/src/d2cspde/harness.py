"""Convergence experiments on the 1-d torus and their tabular outputs.

Each experiment returns a ``RateTable``: rows of numbers, a fitted log-log
slope, metadata and a list of named checks. ``RateTable.ok`` is true iff
every check passed. Tables are written as CSV with a ``# schema=1`` first
line; runs are described by a plain ``key = value`` manifest.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import build_grid, build_quadrature, sample_point_cloud
from .lifting import (
    hs_norm_diff,
    lifted_resolvent_kernel,
    project,
    semigroup_convergence_gap,
    torus_resolvent_kernel,
    transport_pair,
    two_to_infty_norm_diff,
)
from .operators import (
    CoefficientField,
    SpectralOperator,
    assemble_fd_operator,
    assemble_graph_operator,
    continuum_operator_torus,
    eigendecompose,
    semigroup_matrix,
    torus_eigenfunctions,
    torus_eigenvalue_1d,
    torus_mode_1d,
    weight_matrix,
)
from .spde import (
    SpdeProblem,
    allen_cahn_drift,
    generate_noise,
    mixing_matrix,
    simulate_semilinear,
)

CSV_SCHEMA = 1
PATH_BLOCK = 25


# -- tables -------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RateTable:
    name: str
    columns: list
    rows: list = field(default_factory=list)
    slope: float = float("nan")
    meta: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(passed), detail))
        return bool(passed)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def assert_ok(self) -> None:
        bad = self.failures()
        if bad:
            raise AssertionError("; ".join(f"{c.name}: {c.detail}" for c in bad))

    def to_csv(self, path) -> None:
        write_csv(path, self.columns, self.rows)

    def summary_lines(self) -> list:
        return [", ".join(f"{c}={format_value(v)}" for c, v in zip(self.columns, r)) for r in self.rows]


@dataclass(frozen=True)
class McEstimate:
    mean: float
    se: float
    paths: int
    seed: int

    def __post_init__(self):
        if self.paths < 100:
            raise ValueError(f"Monte Carlo estimates need at least 100 paths, got {self.paths}")

    @classmethod
    def from_samples(cls, samples: np.ndarray, seed: int) -> "McEstimate":
        samples = np.asarray(samples, dtype=float)
        P = samples.shape[0]
        se = float(np.std(samples, ddof=1) / math.sqrt(P)) if P > 1 else float("nan")
        return cls(mean=float(np.mean(samples)), se=se, paths=P, seed=seed)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    max_residual: float
    used: int


def fit_rate(table_or_n, errors=None) -> RateFit:
    """Least-squares slope of log(error) against log(n).

    Accepts a ``RateTable`` (columns ``n`` and ``error``) or two sequences.
    Rows with nonpositive errors are dropped.
    """
    if isinstance(table_or_n, RateTable):
        n, e = table_or_n.column("n"), table_or_n.column("error")
    else:
        n, e = np.asarray(table_or_n, dtype=float), np.asarray(errors, dtype=float)
    keep = (e > 0) & np.isfinite(e)
    if keep.sum() < 3:
        raise ValueError(f"rate fit needs at least 3 positive errors, got {int(keep.sum())}")
    x, y = np.log(n[keep]), np.log(e[keep])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (slope * x + icpt)
    return RateFit(slope=float(slope), intercept=float(icpt), max_residual=float(np.max(np.abs(res))), used=int(keep.sum()))


# -- output files ---------------------------------------------------------------


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = [f"# schema={CSV_SCHEMA}", ",".join(columns)]
    lines += [",".join(format_value(v) for v in r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_csv(path) -> tuple[list, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != f"# schema={CSV_SCHEMA}":
        raise ValueError(f"{path}: missing or unsupported schema line")
    cols = lines[1].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:] if ln], dtype=float)
    return cols, data.reshape(-1, len(cols))


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, config: dict, outputs: Sequence = (), extra: Optional[dict] = None) -> None:
    lines = [f"{k} = {_manifest_value(v)}" for k, v in sorted(config.items())]
    for k, v in sorted((extra or {}).items()):
        lines.append(f"{k} = {_manifest_value(v)}")
    for out in outputs:
        lines.append(f"sha256.{Path(out).name} = {file_sha256(out)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _manifest_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    return format_value(v)


# -- helpers --------------------------------------------------------------------


def _strictly_increasing(k_list: Sequence[int]) -> list:
    ks = [int(k) for k in k_list]
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError(f"grid sizes must be strictly increasing, got {ks}")
    return ks


def _lcm(ks: Sequence[int]) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), ks, 1)


def fd_spectral_operator(k: int, s: float = 1.0, m: int = 1) -> SpectralOperator:
    return eigendecompose(assemble_fd_operator(build_grid(m, k)), s=s)


def monotone_decrease(values: Sequence[float], strict: bool = False, slack: float = 0.05) -> bool:
    """Decreasing sequence; unless ``strict``, one step may rise by at most ``slack``."""
    v = list(values)
    loose = 0
    for a, b in zip(v, v[1:]):
        if b < a:
            continue
        if strict or b > a * (1.0 + slack):
            return False
        loose += 1
    return loose <= 1


def _ratios(values: Sequence[float]) -> list:
    out = [float("nan")]
    for a, b in zip(values, values[1:]):
        out.append(b / a if a > 0 else float("nan"))
    return out


# -- spectral convergence -------------------------------------------------------


def _degenerate_clusters(j_max: int) -> list:
    """Index groups sharing an eigenvalue: {1}, {2, 3}, {4, 5}, ..."""
    groups = [[1]]
    j = 2
    while j <= j_max:
        groups.append([j, j + 1])
        j += 2
    return groups


def _align_cluster(discrete: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Rotate the columns of ``discrete`` onto ``target`` (orthogonal Procrustes)."""
    u, _, vt = np.linalg.svd(discrete.T @ target)
    return discrete @ (u @ vt)


def spectral_convergence_experiment(k_list: Sequence[int] = (16, 32, 64, 128), j_max: int = 8,
                                    q_factor: int = 16, slack: float = 1e-6) -> RateTable:
    """Eigenpair errors of the periodic FD Laplacian against the torus modes.

    Discrete eigenvectors inside a degenerate pair are rotated onto the
    continuum pair before the sup-norm error of the lift is measured.
    """
    ks = _strictly_increasing(k_list)
    if j_max < 1 or j_max >= min(ks) - 1:
        raise ValueError(f"need 1 <= j_max < min(k_list) - 1, got j_max={j_max}")
    table = RateTable(
        name="spectra",
        columns=["n", "j", "lambda_inf", "lambda_n", "error", "bound", "ef_error", "ef_bound", "ratio"],
        meta={"m": 1, "k_list": ks, "j_max": j_max, "q_factor": q_factor},
    )
    groups = _degenerate_clusters(j_max)
    J_need = groups[-1][-1]
    prev: dict = {}
    for k in ks:
        n = k
        grid = build_grid(1, k)
        op = eigendecompose(assemble_fd_operator(grid))
        quad = build_quadrature(1, q_factor * k)
        pair = transport_pair(grid, quad)
        lifted = op.eigenvectors[pair.cell_of, :J_need]
        freqs, kinds = zip(*(torus_mode_1d(j) for j in range(1, J_need + 1)))
        cont = torus_eigenfunctions(np.array(freqs)[:, None], np.array(kinds)[:, None], quad.nodes)
        aligned = np.empty_like(lifted)
        for g in groups:
            idx = [j - 1 for j in g]
            aligned[:, idx] = _align_cluster(lifted[:, idx], cont[:, idx])
        for j in range(1, j_max + 1):
            lam_inf = torus_eigenvalue_1d(j)
            lam_n = float(op.eigenvalues[j - 1])
            err = lam_inf - lam_n
            bound = j**4 * math.pi**4 / (12.0 * n**2)
            ef_err = float(np.max(np.abs(cont[:, j - 1] - aligned[:, j - 1])))
            ef_bound = math.sqrt(2.0) / 2.0 * j * math.pi / n
            ratio = err / prev[j] if prev.get(j, 0) > 0 else float("nan")
            prev[j] = err
            table.rows.append([n, j, lam_inf, lam_n, err, bound, ef_err, ef_bound, ratio])
            tol = 1e-9 * max(1.0, lam_inf)
            table.check(f"eigenvalue bound n={n} j={j}", -tol <= err <= bound + tol,
                        f"error {err:.6g} vs bound {bound:.6g}")
            table.check(f"eigenfunction bound n={n} j={j}", ef_err <= ef_bound + slack,
                        f"error {ef_err:.6g} vs bound {ef_bound:.6g}")
    jj = 2 if j_max >= 2 else 1
    sel = [r for r in table.rows if r[1] == jj]
    if len(sel) >= 3 and all(r[4] > 0 for r in sel):
        table.slope = fit_rate([r[0] for r in sel], [r[4] for r in sel]).slope
        table.meta["slope_mode"] = jj
    return table


def cloud_spectral_report(n_list: Sequence[int] = (200, 400, 800), seed: int = 0, j_max: int = 5,
                          h_exponent: float = 1.0 / 3.0) -> RateTable:
    """Report-only eigenvalue errors of kernel graph Laplacians on random clouds (m = 1).

    The connectivity length is h = n^(-h_exponent). No bounds are asserted.
    """
    table = RateTable(name="cloud-spectra", columns=["n", "j", "lambda_inf", "lambda_n", "error", "h"],
                      meta={"seed": seed, "h_exponent": h_exponent})
    lap = CoefficientField()
    for n in n_list:
        cloud = sample_point_cloud(1, int(n), seed)
        h = float(n) ** (-h_exponent)
        op = eigendecompose(assemble_graph_operator(weight_matrix(cloud, h), lap, cloud.nodes))
        for j in range(1, j_max + 1):
            lam_inf = torus_eigenvalue_1d(j)
            lam_n = float(op.eigenvalues[j - 1])
            table.rows.append([int(n), j, lam_inf, lam_n, abs(lam_inf - lam_n), h])
    return table


# -- resolvent and semigroup ----------------------------------------------------


def resolvent_convergence_experiment(k_list: Sequence[int] = (16, 32, 64), s: float = 1.0, beta: float = 0.5,
                                     J: Optional[int] = None, tail_tol: float = 1e-6,
                                     q_factor: int = 16) -> RateTable:
    """HS and L^2 -> L^inf norms of Lambda R_n^beta Pi - R_inf^beta on T^1."""
    ks = _strictly_increasing(k_list)
    if not beta > 1.0 / (4.0 * s):
        raise ValueError(f"beta must exceed m/(4s) = {1.0 / (4.0 * s):.6g}")
    quad = build_quadrature(1, q_factor * _lcm(ks))
    G = torus_resolvent_kernel(s, beta, quad, J=J, tail_tol=tail_tol)
    table = RateTable(
        name="resolvent",
        columns=["n", "beta", "J", "hs_norm", "two_inf_norm", "error", "ratio"],
        meta={"m": 1, "s": s, "beta": beta, "J": G.n_modes, "tail": G.tail, "Q": quad.q_per_axis},
    )
    hs, ti = [], []
    for k in ks:
        op = fd_spectral_operator(k, s)
        Kn = lifted_resolvent_kernel(op, transport_pair(build_grid(1, k), quad), beta)
        hs.append(hs_norm_diff(Kn, G))
        ti.append(two_to_infty_norm_diff(Kn, G))
    for k, a, b, r in zip(ks, hs, ti, _ratios(ti)):
        table.rows.append([k, beta, G.n_modes, a, b, b, r])
    table.check("two_inf monotone", monotone_decrease(ti), f"values {ti}")
    table.check("hs monotone", monotone_decrease(hs), f"values {hs}")
    if len(ks) >= 3 and min(ti) > 0:
        table.slope = fit_rate(ks, ti).slope
    return table


def semigroup_norm_q_to_inf(S: np.ndarray, q: float) -> float:
    """||S||_{L^q -> L^inf} on equally weighted nodes, exactly.

    (S u)_i = mean_j (n S_ij) u_j, so the norm is the largest L^{q'} norm
    of a kernel row under the node measure.
    """
    n = S.shape[0]
    Kr = np.abs(n * S)
    if math.isinf(q):
        return float(np.max(np.mean(Kr, axis=1)))
    if q == 1:
        return float(np.max(Kr))
    qp = q / (q - 1.0)
    return float(np.max(np.mean(Kr**qp, axis=1) ** (1.0 / qp)))


def ultracontractivity_experiment(k_list: Sequence[int] = (16, 32, 64, 128), s: float = 1.0, q: float = 2.0,
                                  beta: float = 0.3, t_grid: Optional[Sequence[float]] = None,
                                  max_ratio: float = 3.0) -> RateTable:
    """sup_t t^(2 beta / q) ||S_n(t)||_{q -> inf} per grid, plus the inf -> inf norm."""
    ks = _strictly_increasing(k_list)
    if not beta > 1.0 / (4.0 * s):
        raise ValueError(f"beta must exceed m/(4s) = {1.0 / (4.0 * s):.6g}")
    t_grid = np.logspace(-3, 0, 31) if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0):
        raise ValueError("times must be positive")
    w = 0.0 if math.isinf(q) else 2.0 * beta / q
    table = RateTable(name="ultra", columns=["n", "constant", "t_argmax", "inf_inf_norm", "error"],
                      meta={"m": 1, "s": s, "q": q, "beta": beta, "t_min": float(t_grid.min()), "t_max": float(t_grid.max())})
    consts = []
    for k in ks:
        op = fd_spectral_operator(k, s)
        vals, infs = [], []
        for t in t_grid:
            S = semigroup_matrix(op, float(t))
            vals.append(t**w * semigroup_norm_q_to_inf(S, q))
            infs.append(semigroup_norm_q_to_inf(S, math.inf))
        i = int(np.argmax(vals))
        consts.append(vals[i])
        table.rows.append([k, vals[i], float(t_grid[i]), max(infs), vals[i]])
        table.check(f"inf->inf contraction n={k}", max(infs) <= 1.0 + 1e-8, f"max norm {max(infs):.17g}")
    ratio = max(consts) / min(consts)
    table.meta["ratio"] = ratio
    table.check("uniform constant", np.all(np.isfinite(consts)) and ratio <= max_ratio, f"max/min ratio {ratio:.6g}")
    return table


def semigroup_experiment(k_list: Sequence[int] = (16, 32, 64, 128), s: float = 1.0, t_max: float = 1.0,
                         n_times: int = 101, mode: int = 2, q: float = 2.0, max_ratio: float = 0.6,
                         q_factor: int = 16) -> RateTable:
    """sup_t ||Lambda S_n(t) Pi x - S_inf(t) x|| for x = psi_inf^(mode)."""
    ks = _strictly_increasing(k_list)
    quad = build_quadrature(1, q_factor * _lcm(ks))
    op_inf = continuum_operator_torus(1, max(mode, 3), quad, s=s)
    x = op_inf.eigenvectors[:, mode - 1]
    t_grid = np.linspace(0.0, t_max, n_times)
    gaps = []
    for k in ks:
        op = fd_spectral_operator(k, s)
        gaps.append(semigroup_convergence_gap(op, op_inf, transport_pair(build_grid(1, k), quad), x, t_grid, q=q))
    table = RateTable(name="semigroup", columns=["n", "error", "ratio"],
                      meta={"m": 1, "s": s, "mode": mode, "q": q, "t_max": t_max, "n_times": n_times})
    ratios = _ratios(gaps)
    for k, g, r in zip(ks, gaps, ratios):
        table.rows.append([k, g, r])
    table.check("gap ratio", all(r <= max_ratio for r in ratios[1:]), f"ratios {ratios[1:]}")
    if len(ks) >= 3:
        table.slope = fit_rate(ks, gaps).slope
    return table


# -- coupled Monte Carlo ---------------------------------------------------------


def continuum_noise_tail(s: float, beta: float, J: int) -> float:
    """sum_{j > J} (1 + lambda_j^s)^(-2 beta) on T^1, bounded by the integral tail."""
    from .lifting import torus_tail_bound

    return torus_tail_bound(s, beta, max((J - 1) // 2, 1))


@dataclass(frozen=True)
class _Level:
    k: int
    op: SpectralOperator
    mixing: np.ndarray
    xi: np.ndarray


def _coupled_levels(ks, s, J, quad, xi_func) -> list:
    op_inf = continuum_operator_torus(1, J, quad)
    levels = []
    for k in ks:
        grid = build_grid(1, k)
        pair = transport_pair(grid, quad)
        op = fd_spectral_operator(k, s)
        xi = project(xi_func(quad.nodes[:, 0]), pair) if xi_func is not None else np.zeros(k)
        levels.append(_Level(k=k, op=op, mixing=mixing_matrix(pair, op, op_inf, J), xi=xi))
    return levels


def _coupled_mc(ks, s, T, K, J, paths, seed, threads, xi_func, drift, norm_q, p, noise_scale, r_max):
    """Per-path errors max_k ||lift X_n(t_k) - X_ref(t_k)||_q for every coarse level."""
    ks = _strictly_increasing(ks)
    k_ref = ks[-1]
    if any(k_ref % k for k in ks):
        raise ValueError("every grid size must divide the reference size")
    quad = build_quadrature(1, 16 * k_ref)
    levels = _coupled_levels(ks, s, J, quad, xi_func)
    blocks = [(b, min(PATH_BLOCK, paths - b)) for b in range(0, paths, PATH_BLOCK)]

    def run_block(blk):
        start, count = blk
        noise = generate_noise(J, T, K, seed, basis_kind="continuum", paths=count, first_path=start)
        inc = noise.increments * noise_scale
        nodal, blown = [], np.zeros(count, dtype=bool)
        for lv in levels:
            dW = inc @ lv.mixing.T
            prob = SpdeProblem(operator=lv.op, xi=lv.xi, T=T, K=K, drift=drift, noise_mode="coupled",
                               scheme="A", r_max=r_max)
            sol = simulate_semilinear(prob, dW, store="nodal")
            nodal.append(sol.values)
            blown |= sol.blown_up
        ref = nodal[-1]
        errs = np.zeros((count, len(levels)))
        for i, (lv, X) in enumerate(zip(levels, nodal)):
            D = np.repeat(X, k_ref // lv.k, axis=-1) - ref
            if math.isinf(norm_q):
                per_t = np.max(np.abs(D), axis=-1)
            else:
                per_t = np.mean(np.abs(D) ** norm_q, axis=-1) ** (1.0 / norm_q)
            errs[:, i] = np.max(per_t, axis=1) ** p
        return errs, blown, noise.fingerprint()

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_block, blocks))
    else:
        results = [run_block(b) for b in blocks]
    errs = np.concatenate([r[0] for r in results], axis=0)
    blown = np.concatenate([r[1] for r in results])
    noise_hash = hashlib.sha256("".join(r[2] for r in results).encode()).hexdigest()[:16]
    return ks, levels, errs, blown, noise_hash


def _mc_table(name, ks, errs, blown, noise_hash, seed, p, meta, separation: float = 2.0) -> RateTable:
    table = RateTable(name=name, columns=["n", "error", "se", "paths", "ratio", "blowups"], meta=meta)
    table.meta["noise_hash"] = noise_hash
    coarse = ks[:-1]
    ests = []
    for i, k in enumerate(coarse):
        raw = McEstimate.from_samples(errs[:, i], seed)
        if p != 1:
            # delta method for E[Y]^(1/p)
            mean = raw.mean ** (1.0 / p)
            se = raw.se * mean / (p * raw.mean) if raw.mean > 0 else 0.0
            est = McEstimate(mean=mean, se=se, paths=raw.paths, seed=seed)
        else:
            est = raw
        ests.append(est)
    ratios = _ratios([e.mean for e in ests])
    n_blown = int(blown.sum())
    for k, e, r in zip(coarse, ests, ratios):
        table.rows.append([k, e.mean, e.se, e.paths, r, n_blown])
    table.meta["reference_n"] = ks[-1]
    table.meta["blowups"] = n_blown
    table.check("no blow-up", n_blown == 0, f"{n_blown} paths exceeded the threshold")
    seps = []
    for a, b in zip(ests, ests[1:]):
        pooled = math.sqrt(a.se**2 + b.se**2)
        seps.append((a.mean - b.mean) / pooled if pooled > 0 else (math.inf if a.mean > b.mean else -math.inf))
    table.meta["separations"] = seps
    table.check("strict decrease", all(a.mean > b.mean for a, b in zip(ests, ests[1:])),
                f"means {[e.mean for e in ests]}")
    table.check(f"{separation:g}-SE separation", all(x >= separation for x in seps), f"separations {seps}")
    if n_blown == 0 and len(coarse) >= 3 and all(e.mean > 0 for e in ests):
        table.slope = fit_rate(coarse, [e.mean for e in ests]).slope
    return table


def ou_convergence_experiment(k_list: Sequence[int] = (16, 32, 64, 128), s: float = 1.0, T: float = 0.5,
                              K: int = 512, J: Optional[int] = None, paths: int = 200, seed: int = 0,
                              threads: int = 1, noise_scale: float = 1.0, tail_beta: float = 0.375) -> RateTable:
    """E max_k ||lift W_{A_n}(t_k) - W_{A_ref}(t_k)||_{L^2} with coupled noise."""
    ks = _strictly_increasing(k_list)
    J = ks[-1] if J is None else int(J)
    ks, levels, errs, blown, nh = _coupled_mc(ks, s, T, K, J, paths, seed, threads, None, None, 2.0, 1.0,
                                              noise_scale, math.inf)
    meta = {"m": 1, "s": s, "T": T, "K": K, "J": J, "paths": paths, "seed": seed, "q": 2, "p": 1,
            "noise_tail": continuum_noise_tail(s, tail_beta, J), "tail_beta": tail_beta,
            "noise_scale": noise_scale}
    return _mc_table("ou", ks, errs, blown, nh, seed, 1.0, meta)


def default_initial_datum(x: np.ndarray) -> np.ndarray:
    return 0.1 * np.sin(2.0 * np.pi * x)


def allen_cahn_convergence_experiment(k_list: Sequence[int] = (16, 32, 64, 128), s: float = 1.0, T: float = 0.5,
                                      K: int = 512, J: Optional[int] = None, paths: int = 100, seed: int = 0,
                                      p: float = 1.0, threads: int = 1,
                                      xi: Optional[Callable] = default_initial_datum,
                                      drift=None, noise_scale: float = 1.0, r_max: float = 1e6,
                                      tail_beta: float = 0.375) -> RateTable:
    """E[max_k ||lift X_n(t_k) - X_ref(t_k)||_inf^p]^(1/p) for stochastic Allen-Cahn.

    ``drift="none"`` removes the nonlinearity (then the run reduces to the
    coupled OU experiment with initial datum ``xi``).
    """
    if not 0.5 < s <= 1.0:
        raise ValueError(f"s must lie in (1/2, 1], got {s}")
    ks = _strictly_increasing(k_list)
    J = ks[-1] if J is None else int(J)
    f = allen_cahn_drift() if drift is None else (None if drift == "none" else drift)
    ks, levels, errs, blown, nh = _coupled_mc(ks, s, T, K, J, paths, seed, threads, xi, f, math.inf, p,
                                              noise_scale, r_max)
    meta = {"m": 1, "s": s, "T": T, "K": K, "J": J, "paths": paths, "seed": seed, "q": "inf", "p": p,
            "noise_tail": continuum_noise_tail(s, tail_beta, J), "tail_beta": tail_beta,
            "noise_scale": noise_scale, "r_max": r_max}
    table = _mc_table("allen-cahn", ks, errs, blown, nh, seed, p, meta)
    if blown.any():
        table.slope = float("nan")
        first = int(np.flatnonzero(blown)[0])
        table.meta["first_blown_path"] = first
    return table
