"""Discretization sites on the flat torus and their transport maps.

The torus T^m is the unit cube [0, 1)^m with opposite faces identified and
normalized volume measure. Two kinds of site sets are supported: the
equidistant grid with k points per axis and i.i.d. uniform point clouds.
Continuum integrals are approximated by midpoint sums on a uniform
``QuadratureGrid``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class Torus:
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"torus dimension must be >= 1, got {self.m}")

    @property
    def volume(self) -> float:
        return 1.0


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TorusGrid:
    """Square equidistant grid with ``k`` points per axis, ``n = k**m`` nodes.

    Nodes are ordered lexicographically in the multi-index (first axis
    slowest), node ``j`` sitting at ``(j - 1/2) / k`` per axis.
    """

    m: int
    k: int
    nodes: np.ndarray

    @property
    def n(self) -> int:
        return self.k**self.m

    @property
    def h(self) -> float:
        return 1.0 / self.k


@dataclass(frozen=True, eq=False)
class PointCloud:
    m: int
    nodes: np.ndarray
    seed: Optional[int] = None

    @property
    def n(self) -> int:
        return self.nodes.shape[0]


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Uniform midpoint grid with ``q_per_axis`` points per axis."""

    m: int
    q_per_axis: int
    nodes: np.ndarray

    @property
    def size(self) -> int:
        return self.q_per_axis**self.m

    @property
    def weight(self) -> float:
        return 1.0 / self.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, self.weight)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Midpoint-rule integral over the last axis."""
        return np.mean(values, axis=-1)


@dataclass(frozen=True, eq=False)
class TransportMap:
    """Assignment of the torus to the sites of a grid or cloud.

    ``cell_of[q]`` is the node owning quadrature point ``q`` of ``quad``.
    For grids the map is known analytically, so ``cell_mass`` is exactly
    ``1/n``; for Voronoi maps it is the quadrature mass of each cell.
    """

    owner: object
    kind: str
    quad: QuadratureGrid
    cell_of: np.ndarray
    cell_mass: np.ndarray
    epsilon: float

    @property
    def n(self) -> int:
        return self.owner.n

    @property
    def mass_deviation(self) -> float:
        return float(np.max(np.abs(self.cell_mass - 1.0 / self.n)))

    def quadrature_mass(self) -> np.ndarray:
        counts = np.bincount(self.cell_of, minlength=self.n)
        return counts / self.quad.size


def _multi_index_points(m: int, per_axis: int) -> np.ndarray:
    axis = (np.arange(per_axis) + 0.5) / per_axis
    mesh = np.meshgrid(*([axis] * m), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def build_grid(m: int, k: int) -> TorusGrid:
    Torus(m)
    if k < 2:
        raise ValueError(f"grid needs at least 2 points per axis, got k={k}")
    return TorusGrid(m=m, k=k, nodes=_freeze(_multi_index_points(m, k)))


def build_quadrature(m: int, q_per_axis: int) -> QuadratureGrid:
    Torus(m)
    if q_per_axis < 1:
        raise ValueError("quadrature resolution must be positive")
    return QuadratureGrid(m=m, q_per_axis=q_per_axis, nodes=_freeze(_multi_index_points(m, q_per_axis)))


def default_quadrature(site) -> QuadratureGrid:
    """16 k per axis on grids, ceil(10 n^(1/m)) on clouds."""
    if isinstance(site, TorusGrid):
        return build_quadrature(site.m, 16 * site.k)
    return build_quadrature(site.m, math.ceil(10 * site.n ** (1.0 / site.m)))


def sample_point_cloud(m: int, n: int, seed: int) -> PointCloud:
    Torus(m)
    if n < 2:
        raise ValueError(f"point cloud needs n >= 2, got {n}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    pts = rng.random((n, m))
    # random() draws from [0, 1), but guard the periodic reduction anyway
    pts = np.mod(pts, 1.0)
    return PointCloud(m=m, nodes=_freeze(pts), seed=int(seed))


def periodic_delta(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    d = np.mod(d, 1.0)
    return np.minimum(d, 1.0 - d)


def periodic_distance(x, y, m: Optional[int] = None):
    """Geodesic distance on the flat torus; broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if m is not None and x.shape[-1:] != (m,) and not (m == 1 and x.ndim == 0):
        raise ValueError(f"points must have {m} coordinates")
    if x.ndim == 0:
        return float(periodic_delta(x, y))
    d = np.sqrt(np.sum(periodic_delta(x, y) ** 2, axis=-1))
    return float(d) if d.ndim == 0 else d


def pairwise_periodic_distances(a: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
    b = a if b is None else b
    return periodic_distance(a[:, None, :], b[None, :, :])


def grid_cell_index(grid: TorusGrid, points: np.ndarray) -> np.ndarray:
    """Index of the half-open cube U^(j) containing each point."""
    pts = np.mod(np.asarray(points, dtype=float), 1.0)
    idx = np.floor(pts * grid.k).astype(np.int64)
    np.clip(idx, 0, grid.k - 1, out=idx)
    flat = np.zeros(idx.shape[0], dtype=np.int64)
    for axis in range(grid.m):
        flat = flat * grid.k + idx[:, axis]
    return flat


def grid_transport(grid: TorusGrid, x) -> np.ndarray:
    """T_n(x): the grid node whose cube contains x."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[-1] != grid.m:
        pts = pts.reshape(-1, grid.m)
    return grid.nodes[grid_cell_index(grid, pts)]


def build_transport_map_grid(grid: TorusGrid, quad: Optional[QuadratureGrid] = None) -> TransportMap:
    quad = default_quadrature(grid) if quad is None else quad
    if quad.m != grid.m:
        raise ValueError("quadrature and grid dimensions differ")
    if quad.q_per_axis % grid.k == 0:
        # exact integer assignment avoids floor() round-off at cube faces
        r = quad.q_per_axis // grid.k
        axis_idx = np.arange(quad.q_per_axis) // r
        mesh = np.meshgrid(*([axis_idx] * grid.m), indexing="ij")
        cell_of = np.zeros(quad.size, dtype=np.int64)
        for g in mesh:
            cell_of = cell_of * grid.k + g.ravel()
    else:
        cell_of = grid_cell_index(grid, quad.nodes)
    epsilon = 0.5 * math.sqrt(grid.m) * grid.n ** (-1.0 / grid.m)
    return TransportMap(
        owner=grid,
        kind="grid",
        quad=quad,
        cell_of=_freeze(cell_of),
        cell_mass=_freeze(np.full(grid.n, 1.0 / grid.n)),
        epsilon=epsilon,
    )


def nearest_node(nodes: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest node under the periodic metric, ties to the lowest index."""
    n = nodes.shape[0]
    if n == 1:
        return np.zeros(points.shape[0], dtype=np.int64), periodic_distance(points, nodes[0])
    tree = cKDTree(np.mod(nodes, 1.0), boxsize=1.0)
    kq = min(n, 4)
    dist, idx = tree.query(np.mod(points, 1.0), k=kq)
    # recompute distances exactly so ties are decided on identical arithmetic
    exact = periodic_distance(points[:, None, :], nodes[idx])
    best = exact.min(axis=1, keepdims=True)
    masked = np.where(exact <= best, idx, n)
    choice = masked.min(axis=1)
    return choice.astype(np.int64), best[:, 0]


def build_transport_map_voronoi(cloud: PointCloud, quad: Optional[QuadratureGrid] = None) -> TransportMap:
    quad = default_quadrature(cloud) if quad is None else quad
    if quad.m != cloud.m:
        raise ValueError("quadrature and cloud dimensions differ")
    if quad.size < 10 * cloud.n:
        raise ValueError(f"quadrature too coarse: Q^m={quad.size} < 10 n={10 * cloud.n}")
    cell_of, dist = nearest_node(cloud.nodes, quad.nodes)
    mass = np.bincount(cell_of, minlength=cloud.n) / quad.size
    return TransportMap(
        owner=cloud,
        kind="voronoi",
        quad=quad,
        cell_of=_freeze(cell_of),
        cell_mass=_freeze(mass),
        epsilon=float(dist.max()),
    )


def save_point_cloud(cloud: PointCloud, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in cloud.nodes:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_point_cloud(path, seed: Optional[int] = None) -> PointCloud:
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    pts = np.array([[float(v) for v in r] for r in rows], dtype=float)
    return PointCloud(m=pts.shape[1], nodes=_freeze(pts), seed=seed)
