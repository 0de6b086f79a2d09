"""Marked Poisson point process simulation for fibre systems.

Homogeneous simulation, simulation with directional inhomogeneity
regions, window restriction, fibre segment export, and the point-cloud
CSV interchange format (columns x,y,z,dx,dy,dz).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .directional import DirectionalModel, RandomStream
from .geometry import Cube

__all__ = [
    "FibreSystem",
    "InhomogeneitySpec",
    "simulate_homogeneous",
    "simulate_with_inhomogeneity",
    "restrict",
    "fibre_segments",
    "write_point_cloud",
    "read_point_cloud",
]

MAX_EXPECTED_POINTS = 1e8


@dataclass
class FibreSystem:
    """A realization of a marked Poisson point process in a cubic window."""

    window: Cube
    intensity: float
    points: np.ndarray  # (n, 3) fibre centers
    marks: np.ndarray  # (n, 3) unit direction per center
    fibre_length: float | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.marks = np.asarray(self.marks, dtype=float).reshape(-1, 3)
        if len(self.points) != len(self.marks):
            raise ValueError("points and marks must have equal length")
        if self.intensity <= 0:
            raise ValueError("intensity must be positive")

    def __len__(self):
        return len(self.points)


@dataclass
class InhomogeneitySpec:
    """Directional inhomogeneity: marks in ``regions`` follow ``inside``."""

    regions: list[Cube]
    inside: DirectionalModel
    outside: DirectionalModel

    def validate(self, window: Cube):
        for i, region in enumerate(self.regions):
            if np.any(region.origin < window.origin) or np.any(region.upper > window.upper):
                raise ValueError(f"inhomogeneity region {i} leaves the window")
        for i, a in enumerate(self.regions):
            for b in self.regions[i + 1 :]:
                if a.intersect(b) is not None:
                    raise ValueError("inhomogeneity regions must be pairwise disjoint")

    def membership(self, points: np.ndarray) -> np.ndarray:
        inside = np.zeros(len(points), dtype=bool)
        for region in self.regions:
            inside |= region.contains(points)
        return inside


def _poisson_locations(window: Cube, lam: float, rng: RandomStream,
                       max_expected: float) -> np.ndarray:
    if lam <= 0:
        raise ValueError("intensity must be positive")
    if window.side <= 0:
        raise ValueError("window must have positive volume")
    expected = lam * window.volume
    if expected > max_expected:
        raise MemoryError(
            f"expected point count {expected:.3g} exceeds the guard {max_expected:.3g}"
        )
    gen = rng.generator
    n = gen.poisson(expected)
    pts = window.origin + window.side * gen.random((n, 3))
    # lexicographic order makes the output independent of generation strategy
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    return pts[order]


def simulate_homogeneous(window: Cube, lam: float, model: DirectionalModel,
                         rng: RandomStream, fibre_length: float | None = None,
                         max_expected: float = MAX_EXPECTED_POINTS) -> FibreSystem:
    """Homogeneous MPPP: Poisson(lam * vol) points, i.i.d. marks from ``model``."""
    pts = _poisson_locations(window, lam, rng.child(0), max_expected)
    marks = model.sample(len(pts), rng.child(1))
    return FibreSystem(window, lam, pts, marks, fibre_length)


def simulate_with_inhomogeneity(window: Cube, lam: float, spec: InhomogeneitySpec,
                                rng: RandomStream, fibre_length: float | None = None,
                                max_expected: float = MAX_EXPECTED_POINTS) -> FibreSystem:
    """MPPP whose marks inside the spec regions follow the inside model."""
    spec.validate(window)
    pts = _poisson_locations(window, lam, rng.child(0), max_expected)
    inside = spec.membership(pts)
    marks = spec.outside.sample(len(pts), rng.child(1))
    n_in = int(inside.sum())
    if n_in:
        marks[inside] = spec.inside.sample(n_in, rng.child(2))
    return FibreSystem(window, lam, pts, marks, fibre_length)


def restrict(system: FibreSystem, sub: Cube) -> FibreSystem:
    """Keep exactly the points located in ``sub``; intensity is unchanged."""
    keep = sub.contains(system.points)
    return FibreSystem(sub, system.intensity, system.points[keep],
                       system.marks[keep], system.fibre_length)


def fibre_segments(system: FibreSystem) -> np.ndarray:
    """Segment endpoints Y -+ (l/2) xi as an (n, 2, 3) array."""
    if system.fibre_length is None:
        raise ValueError("fibre length is not set on this system")
    half = 0.5 * system.fibre_length * system.marks
    return np.stack([system.points - half, system.points + half], axis=1)


def volume_fraction(system: FibreSystem, fibre_radius: float) -> float:
    """Fibre volume ratio n * pi r^2 l / vol(window) (overlap ignored)."""
    if system.fibre_length is None:
        raise ValueError("fibre length is not set on this system")
    return len(system) * np.pi * fibre_radius**2 * system.fibre_length / system.window.volume


_HEADER = "x,y,z,dx,dy,dz"


def write_point_cloud(path, system: FibreSystem):
    data = np.hstack([system.points, system.marks])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=_HEADER, comments="")


def read_point_cloud(path, window: Cube, intensity: float,
                     fibre_length: float | None = None, unit_tol: float = 1e-6) -> FibreSystem:
    with warnings.catch_warnings():
        # header-only files are a legitimate empty cloud, not a warning
        warnings.simplefilter("ignore", UserWarning)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = np.empty((0, 6))
    if data.shape[1] != 6:
        raise ValueError("point cloud must have columns x,y,z,dx,dy,dz")
    marks = data[:, 3:6]
    norms = np.linalg.norm(marks, axis=1)
    if np.any(np.abs(norms - 1.0) > unit_tol):
        raise ValueError("direction columns are not unit-normalized")
    marks = marks / norms[:, None] if len(marks) else marks
    return FibreSystem(window, intensity, data[:, :3], marks, fibre_length)
