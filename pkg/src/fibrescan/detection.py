"""Scanning-window detection of directional inhomogeneities.

A cubic window sweeps the lattice discretization of the minus-sampled
observation window; the local entropy values form a random field whose
outliers (3-sigma rule around the field median) constitute the estimated
inhomogeneity region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import _fast
from ._fast import PointGrid
from .estimation import LOG_CLAMP, default_bandwidth, get_kernel
from .geometry import Cube, Lattice, dilate, erode, lattice_points
from .process import FibreSystem

__all__ = [
    "ScanConfig",
    "ScanField",
    "ScanStats",
    "DetectionResult",
    "scan_entropy_field",
    "robust_stats",
    "excursion_set",
    "detect",
    "optimal_scan_width",
    "dvol_bound",
    "dvol_estimate",
    "detection_quality",
    "InhomogeneityScanner",
]


@dataclass
class ScanConfig:
    """Parameters of the scanning sweep."""

    window: Cube
    scan_side: float
    mesh: float | None = None
    multiplier: float = 3.0
    mode: str = "plain"
    kernel: str = "tricube"
    bandwidth: float | None = None
    min_points: int = 30

    def __post_init__(self):
        if self.scan_side <= 0 or self.scan_side >= self.window.side:
            raise ValueError("scanning window side must satisfy 0 < b < side(W)")
        if self.mesh is None:
            self.mesh = self.scan_side / 2.0
        if self.mesh <= 0:
            raise ValueError("lattice mesh must be positive")
        if self.mode not in ("plain", "modified"):
            raise ValueError("mode must be 'plain' or 'modified'")
        if self.bandwidth is None:
            self.bandwidth = default_bandwidth(self.scan_side**3)
        if self.multiplier <= 0:
            raise ValueError("threshold multiplier must be positive")

    def as_dict(self) -> dict:
        return {
            "window": {"origin": self.window.origin.tolist(), "side": self.window.side},
            "scan_side": self.scan_side,
            "mesh": self.mesh,
            "multiplier": self.multiplier,
            "mode": self.mode,
            "kernel": get_kernel(self.kernel).name,
            "bandwidth": self.bandwidth,
            "min_points": self.min_points,
        }


@dataclass
class ScanField:
    """Local entropy estimates over the scan lattice."""

    lattice: Lattice
    nodes: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    clamps: np.ndarray
    config: ScanConfig

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)


@dataclass
class ScanStats:
    """Robust location/scale statistics of the entropy field."""

    median: float
    mean: float
    variance: float
    n: int

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)


@dataclass
class DetectionResult:
    """Excursion set of the entropy field with its statistics."""

    field: ScanField
    stats: ScanStats
    multiplier: float
    flagged: np.ndarray  # boolean per lattice node
    deviations: np.ndarray  # (value - median)/sigma, nan for invalid nodes

    @property
    def flagged_points(self) -> np.ndarray:
        return self.field.nodes[self.flagged]


def scan_entropy_field(system: FibreSystem, cfg: ScanConfig,
                       copy: FibreSystem | None = None) -> ScanField:
    """Evaluate the local entropy estimator at every lattice node of W minus B."""
    W = cfg.window
    b = cfg.scan_side
    eroded = erode(W, Cube.at_origin(b))
    if eroded is None or eroded.side <= 0:
        raise ValueError("minus-sampled window W erode B is empty")
    if not np.all(system.window.contains(W.origin[None, :])) or not np.all(
        system.window.contains(W.upper[None, :])
    ):
        raise ValueError("the system window must contain the observation window")
    lattice = Lattice(eroded, cfg.mesh)
    nodes = lattice_points(lattice)
    kernel = get_kernel(cfg.kernel)
    grid = PointGrid(system.points, system.window.origin, system.window.side, b)
    marks = np.ascontiguousarray(system.marks)
    if cfg.mode == "plain":
        values, counts, clamps = _fast.scan_entropy_sweep(
            nodes, b, grid.points, marks, grid.order, grid.starts,
            grid.origin, grid.cell, grid.n_axis,
            cfg.bandwidth, kernel.kid, kernel.constant, system.intensity,
            LOG_CLAMP, cfg.min_points)
    else:
        if copy is None:
            raise ValueError("modified mode requires an independent copy of the process")
        cgrid = PointGrid(copy.points, system.window.origin, system.window.side, b)
        values, counts, clamps = _fast.scan_entropy_sweep_modified(
            nodes, b, grid.points, marks, grid.order, grid.starts,
            cgrid.points, np.ascontiguousarray(copy.marks), cgrid.order, cgrid.starts,
            grid.origin, grid.cell, grid.n_axis,
            cfg.bandwidth, kernel.kid, kernel.constant, system.intensity,
            LOG_CLAMP, cfg.min_points)
    return ScanField(lattice, nodes, values, counts, clamps, cfg)


def robust_stats(field: ScanField) -> ScanStats:
    """Median, mean and unbiased sample variance over the valid field values."""
    vals = field.values[field.valid]
    if len(vals) < 2:
        raise ValueError("need at least two valid field values")
    return ScanStats(float(np.median(vals)), float(np.mean(vals)),
                     float(np.var(vals, ddof=1)), len(vals))


def excursion_set(field: ScanField, stats: ScanStats,
                  multiplier: float | None = None) -> DetectionResult:
    """Flag lattice nodes with |value - median| > multiplier * sigma."""
    m = field.config.multiplier if multiplier is None else float(multiplier)
    sigma = stats.sigma
    dev = np.full(len(field.values), np.nan)
    valid = field.valid
    if sigma > 0:
        dev[valid] = (field.values[valid] - stats.median) / sigma
        flagged = valid & (np.abs(np.nan_to_num(dev, nan=0.0)) > m)
    else:
        dev[valid] = 0.0
        flagged = np.zeros(len(field.values), dtype=bool)
    return DetectionResult(field, stats, m, flagged, dev)


def detect(system: FibreSystem, cfg: ScanConfig,
           copy: FibreSystem | None = None) -> DetectionResult:
    """Full pipeline: scan, robust statistics, excursion set."""
    field = scan_entropy_field(system, cfg, copy)
    stats = robust_stats(field)
    return excursion_set(field, stats)


def optimal_scan_width(a: float, w: float, alpha_f: float) -> tuple[float, bool]:
    """Closed-form minimizer of the distance-in-measure bound.

    Returns (b_opt, valid) where valid means 0 < b_opt < a, the regime in
    which the bound derivation holds.
    """
    if not 0 < a < w:
        raise ValueError("need 0 < a < w")
    if not 0 < alpha_f < 1:
        raise ValueError("false-alarm level must lie in (0, 1)")
    radicand = alpha_f * (w - a) * (w + (3 - 4 * alpha_f) * a)
    if radicand < 0:
        raise ValueError("negative radicand in the optimal-width formula")
    b_opt = (math.sqrt(radicand) - (1 - 2 * alpha_f) * a - alpha_f * w) / (1 - alpha_f)
    return b_opt, 0 < b_opt < a


def dvol_bound(a: float, w: float, b: float, alpha_f: float) -> float:
    """Upper bound (a+b)^3 (1-alpha) + ((w-b)^3 - (a-b)^3) alpha."""
    return (a + b) ** 3 * (1 - alpha_f) + ((w - b) ** 3 - (a - b) ** 3) * alpha_f


def _membership(regions, points) -> np.ndarray:
    inside = np.zeros(len(points), dtype=bool)
    for region in regions:
        inside |= region.contains(points)
    return inside


def dvol_estimate(true_regions, result: DetectionResult) -> float:
    """Lattice volume of the symmetric difference between A and the flagged set."""
    nodes = result.field.nodes
    in_a = _membership(true_regions, nodes)
    xor = in_a ^ result.flagged
    return float(xor.sum()) * result.field.lattice.mesh**3


def detection_quality(true_regions, result: DetectionResult) -> dict:
    """Coverage / false-positive summary against the known regions.

    Coverage is the flagged fraction of lattice nodes in A erode B (windows
    fully inside some region); the false-positive rate is the flagged
    fraction outside A dilate B; the band in between is reported
    separately since windows there straddle a region boundary.
    """
    b_cube = Cube.at_origin(result.field.config.scan_side)
    nodes = result.field.nodes
    flagged = result.flagged
    eroded = [erode(r, b_cube) for r in true_regions]
    eroded = [r for r in eroded if r is not None and r.side > 0]
    dilated = [dilate(r, b_cube) for r in true_regions]
    in_core = _membership(eroded, nodes)
    in_halo = _membership(dilated, nodes)
    band = in_halo & ~in_core
    outside = ~in_halo

    def rate(mask):
        total = int(mask.sum())
        return (float(flagged[mask].sum()) / total if total else float("nan"), total)

    coverage, n_core = rate(in_core)
    fpr, n_out = rate(outside)
    band_rate, n_band = rate(band)
    per_region = []
    for r in eroded:
        mask = r.contains(nodes)
        per_region.append(rate(mask)[0])
    return {
        "coverage": coverage,
        "false_positive_rate": fpr,
        "boundary_band_rate": band_rate,
        "n_core": n_core,
        "n_outside": n_out,
        "n_band": n_band,
        "per_region_coverage": per_region,
    }


class InhomogeneityScanner(BaseEstimator):
    """Scanning-window detector with a fit/predict interface.

    ``fit`` consumes a FibreSystem and materializes the entropy field,
    its robust statistics and the excursion set; ``predict`` labels query
    locations by the flag of their nearest lattice node.
    """

    def __init__(self, scan_side=None, mesh=None, multiplier=3.0, mode="plain",
                 kernel="tricube", bandwidth=None, min_points=30,
                 region_side=None, alpha_f=0.05):
        self.scan_side = scan_side
        self.mesh = mesh
        self.multiplier = multiplier
        self.mode = mode
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.min_points = min_points
        self.region_side = region_side
        self.alpha_f = alpha_f

    def fit(self, X: FibreSystem, y=None, copy: FibreSystem | None = None):
        if not isinstance(X, FibreSystem):
            raise TypeError("X must be a FibreSystem")
        side = self.scan_side
        if side is None:
            if self.region_side is None:
                raise ValueError("either scan_side or region_side must be given")
            side, valid = optimal_scan_width(self.region_side, X.window.side, self.alpha_f)
            if not valid:
                raise ValueError("derived scanning width is outside (0, region_side)")
        cfg = ScanConfig(X.window, side, mesh=self.mesh, multiplier=self.multiplier,
                         mode=self.mode, kernel=self.kernel, bandwidth=self.bandwidth,
                         min_points=self.min_points)
        self.config_ = cfg
        self.field_ = scan_entropy_field(X, cfg, copy)
        self.stats_ = robust_stats(self.field_)
        self.result_ = excursion_set(self.field_, self.stats_)
        return self

    def predict(self, X) -> np.ndarray:
        """Flag of the nearest lattice node for each query location (k, 3)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lat = self.field_.lattice
        idx = np.rint((X - lat.bounding.origin) / lat.mesh).astype(int)
        n = lat.points_per_axis
        idx = np.clip(idx, 0, n - 1)
        flat = (idx[:, 0] * n + idx[:, 1]) * n + idx[:, 2]
        return self.result_.flagged[flat]
