"""Euclidean and spherical primitives.

Axis-aligned cubes with Minkowski erosion/dilation, cubic lattices, unit
vectors on the sphere, geodesic distance, and a deterministic equal-area
quadrature grid on S^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Cube",
    "Lattice",
    "SphereGrid",
    "unit_vector",
    "is_unit",
    "geodesic_distance",
    "volume_density",
    "erode",
    "dilate",
    "lattice_points",
    "sphere_integrate",
]

_UNIT_TOL = 1e-12


def unit_vector(v) -> np.ndarray:
    """Return ``v`` normalized to unit length as a float64 array."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=v.ndim > 1)
    if np.any(n == 0):
        raise ValueError("cannot normalize a zero vector")
    return v / n


def is_unit(v, tol: float = 1e-6) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(np.all(np.abs(np.sum(v * v, axis=-1) - 1.0) <= tol))


def _check_unit(v):
    v = np.asarray(v, dtype=float)
    if not np.all(np.abs(np.sum(v * v, axis=-1) - 1.0) <= 1e-9):
        raise ValueError("input is not unit-normalized")
    return v


@dataclass(frozen=True)
class Cube:
    """Axis-aligned cube ``[0, side]^3 + origin``.

    A zero side is permitted: it is the identity element for the
    Minkowski operations.
    """

    origin: np.ndarray
    side: float

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float)
        if origin.shape != (3,):
            raise ValueError("origin must be a 3-vector")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "side", float(self.side))
        if self.side < 0:
            raise ValueError("cube side must be nonnegative")

    @classmethod
    def at_origin(cls, side: float) -> "Cube":
        return cls(np.zeros(3), side)

    @property
    def volume(self) -> float:
        return self.side**3

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.side

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points inside the (closed) cube."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.all((p >= self.origin) & (p <= self.upper), axis=1)
        return inside

    def intersect(self, other: "Cube"):
        """Intersection as an axis-aligned box (lower, upper) or None."""
        lo = np.maximum(self.origin, other.origin)
        hi = np.minimum(self.upper, other.upper)
        if np.any(hi <= lo):
            return None
        return lo, hi

    def __eq__(self, other):
        if not isinstance(other, Cube):
            return NotImplemented
        return self.side == other.side and np.array_equal(self.origin, other.origin)

    def approx_equal(self, other: "Cube", tol: float = 1e-9) -> bool:
        return (
            abs(self.side - other.side) <= tol
            and np.all(np.abs(self.origin - other.origin) <= tol)
        )


def erode(outer: Cube, structuring: Cube):
    """Minkowski erosion ``{x : x + structuring <= outer}`` for cubes.

    Returns None when the structuring element does not fit.
    """
    side = outer.side - structuring.side
    if side < 0:
        return None
    return Cube(outer.origin - structuring.origin, side)


def dilate(inner: Cube, structuring: Cube) -> Cube:
    """Minkowski sum of two axis-aligned cubes."""
    return Cube(inner.origin + structuring.origin, inner.side + structuring.side)


@dataclass(frozen=True)
class Lattice:
    """Cubic lattice of mesh ``r`` anchored at the bounding cube's origin."""

    bounding: Cube
    mesh: float

    def __post_init__(self):
        if self.mesh <= 0:
            raise ValueError("lattice mesh must be positive")

    @property
    def points_per_axis(self) -> int:
        # closed cube: both faces included; guard against float droop
        return int(np.floor(self.bounding.side / self.mesh + 1e-9)) + 1


def lattice_points(lat: Lattice) -> np.ndarray:
    """Enumerate lattice points inside the bounding cube, lexicographic order."""
    if lat.bounding is None:
        raise ValueError("empty bounding cube")
    n = lat.points_per_axis
    axis = lat.bounding.origin[:, None] + lat.mesh * np.arange(n)[None, :]
    xs, ys, zs = np.meshgrid(axis[0], axis[1], axis[2], indexing="ij")
    return np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()])


def geodesic_distance(eta, xi) -> np.ndarray | float:
    """Great-circle distance arccos<eta, xi> on S^2, in [0, pi]."""
    eta = _check_unit(eta)
    xi = _check_unit(xi)
    dot = np.clip(np.sum(eta * xi, axis=-1), -1.0, 1.0)
    return np.arccos(dot)


def volume_density(eta, xi) -> np.ndarray | float:
    """Geodesic-polar area correction |sin r| / r at r = d_g(eta, xi).

    Equals 1 in the limit r -> 0; r = pi is rejected because the
    downstream kernel weights divide by this value.
    """
    r = np.asarray(geodesic_distance(eta, xi))
    if np.any(r >= np.pi):
        raise ValueError("volume density is singular at antipodal points")
    out = np.where(r > 0, np.abs(np.sin(np.where(r > 0, r, 1.0))) / np.where(r > 0, r, 1.0), 1.0)
    if out.ndim == 0:
        return float(out)
    return out


class SphereGrid:
    """Deterministic equal-area quadrature grid on the unit sphere.

    Latitude bands of equal height in z (hence equal area) carry nodes
    equally spaced in azimuth; node weights are band_area / nodes_in_band,
    so the weights sum to 4*pi exactly by construction.
    """

    def __init__(self, nodes: np.ndarray, weights: np.ndarray, band_edges=None, band_offsets=None):
        nodes = np.asarray(nodes, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(weights.sum() - 4 * np.pi) > 1e-9:
            raise ValueError("quadrature weights must sum to 4*pi")
        self.nodes = nodes
        self.weights = weights
        self._band_edges = band_edges
        self._band_offsets = band_offsets

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def equal_area(cls, n_bands: int = 32) -> "SphereGrid":
        if n_bands < 1:
            raise ValueError("need at least one band")
        dz = 2.0 / n_bands
        edges = -1.0 + dz * np.arange(n_bands + 1)
        nodes, weights = [], []
        offsets = [0]
        for k in range(n_bands):
            zc = -1.0 + dz * (k + 0.5)
            s2 = max(1.0 - zc * zc, 0.0)
            m = max(1, int(round(2 * np.pi * s2 / dz)))
            # golden-angle offset per band decorrelates the azimuth columns
            phi = 2 * np.pi * (np.arange(m) + 0.5 * (1 + (k * 0.6180339887498949) % 1)) / m
            s = np.sqrt(s2)
            nodes.append(np.column_stack([s * np.cos(phi), s * np.sin(phi), np.full(m, zc)]))
            weights.append(np.full(m, 2 * np.pi * dz / m))
            offsets.append(offsets[-1] + m)
        w = np.concatenate(weights)
        # absorb float rounding so the sum is exact
        w *= 4 * np.pi / w.sum()
        return cls(np.vstack(nodes), w, band_edges=edges, band_offsets=np.asarray(offsets))

    @classmethod
    def with_min_nodes(cls, n_min: int) -> "SphereGrid":
        n_bands = max(4, int(np.ceil(np.sqrt(n_min * 3 / (2 * np.pi)))))
        grid = cls.equal_area(n_bands)
        while len(grid) < n_min:
            n_bands += 2
            grid = cls.equal_area(n_bands)
        return grid


class SphereCells:
    """Equal-area partition of S^2 into latitude-band sectors.

    Used for binning directions (goodness-of-fit tests) and for computing
    exact cell masses of a density by per-cell Gauss-Legendre quadrature.
    """

    def __init__(self, n_bands: int):
        dz = 2.0 / n_bands
        self.n_bands = n_bands
        self.z_edges = -1.0 + dz * np.arange(n_bands + 1)
        self.sectors = np.empty(n_bands, dtype=int)
        for k in range(n_bands):
            zc = -1.0 + dz * (k + 0.5)
            self.sectors[k] = max(1, int(round(2 * np.pi * (1 - zc * zc) / dz)))
        self.offsets = np.concatenate([[0], np.cumsum(self.sectors)])
        self.n_cells = int(self.offsets[-1])

    @classmethod
    def with_cells(cls, n_cells: int) -> "SphereCells":
        n_bands = max(2, int(round(np.sqrt(n_cells * 3 / (2 * np.pi)))))
        return cls(n_bands)

    def assign(self, directions) -> np.ndarray:
        """Cell index for each unit direction (n, 3)."""
        d = np.atleast_2d(np.asarray(directions, dtype=float))
        z = np.clip(d[:, 2], -1.0, 1.0)
        band = np.clip(((z + 1.0) * self.n_bands / 2.0).astype(int), 0, self.n_bands - 1)
        phi = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi)
        m = self.sectors[band]
        sector = np.clip((phi * m / (2 * np.pi)).astype(int), 0, m - 1)
        return self.offsets[band] + sector

    def masses(self, density_fn, order: int = 6) -> np.ndarray:
        """Cell probabilities by tensor Gauss-Legendre quadrature per cell."""
        gz, gw = np.polynomial.legendre.leggauss(order)
        out = np.empty(self.n_cells)
        for k in range(self.n_bands):
            z0, z1 = self.z_edges[k], self.z_edges[k + 1]
            zq = 0.5 * (z1 - z0) * gz + 0.5 * (z0 + z1)
            zw = 0.5 * (z1 - z0) * gw
            m = self.sectors[k]
            dphi = 2 * np.pi / m
            for j in range(m):
                p0 = j * dphi
                pq = 0.5 * dphi * gz + p0 + 0.5 * dphi
                pw = 0.5 * dphi * gw
                zz, pp = np.meshgrid(zq, pq, indexing="ij")
                ss = np.sqrt(np.clip(1 - zz**2, 0, None))
                pts = np.column_stack(
                    [(ss * np.cos(pp)).ravel(), (ss * np.sin(pp)).ravel(), zz.ravel()]
                )
                w = np.outer(zw, pw).ravel()
                out[self.offsets[k] + j] = np.dot(w, np.asarray(density_fn(pts), dtype=float))
        return out


def sphere_integrate(fn, grid: SphereGrid) -> float:
    """Quadrature sum(w_i * fn(node_i)) over the sphere.

    ``fn`` may be vectorized over an (n, 3) array of directions; a scalar
    callable is applied row-wise.
    """
    try:
        vals = np.asarray(fn(grid.nodes), dtype=float)
        if vals.shape != (len(grid),):
            raise ValueError
    except Exception:
        vals = np.array([fn(x) for x in grid.nodes], dtype=float)
    return float(np.dot(grid.weights, vals))
