"""Command-line front-end for the fibre-system toolkit.

Subcommands cover every pipeline stage: ``simulate`` writes point clouds,
``density`` and ``entropy`` produce estimation reports, ``clt`` samples
the standardized entropy statistic, and ``scan`` runs the detection
pipeline.  Each subcommand reads a JSON config file; a root seed flows
through named sub-streams so partial pipelines are independently
reproducible.  Exit codes: 0 success, 1 config error, 2 I/O error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from scipy import stats as scipy_stats

from . import __version__
from .detection import (
    ScanConfig,
    detect,
    detection_quality,
    dvol_bound,
    dvol_estimate,
    optimal_scan_width,
)
from .directional import RandomStream, model_from_spec
from .estimation import (
    EstimatorConfig,
    clt_study,
    default_bandwidth,
    density_sup_error,
    entropy_modified,
    entropy_plain,
    get_kernel,
)
from .geometry import Cube, SphereGrid
from .process import (
    InhomogeneitySpec,
    read_point_cloud,
    simulate_homogeneous,
    simulate_with_inhomogeneity,
    write_point_cloud,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


# ---------------------------------------------------------------------------
# config parsing helpers


def _require(cfg: dict, key: str, context: str):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r} in {context}")
    return cfg[key]


def _cube(spec, context: str) -> Cube:
    try:
        if isinstance(spec, (int, float)):
            return Cube.at_origin(float(spec))
        origin = spec.get("origin", [0.0, 0.0, 0.0])
        return Cube(np.asarray(origin, dtype=float), float(spec["side"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid cube spec in {context}: {exc}") from exc


def _model(spec, context: str):
    try:
        return model_from_spec(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid directional model in {context}: {exc}") from exc


def _load_config(path: str) -> dict:
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _regions(cfg: dict, context: str) -> InhomogeneitySpec:
    regions = [_cube(r, context) for r in _require(cfg, "regions", context)]
    inside = _model(_require(cfg, "inside", context), context)
    outside = _model(_require(cfg, "outside", context), context)
    return InhomogeneitySpec(regions, inside, outside)


def _simulate_from_config(cfg: dict, rng: RandomStream, context: str):
    window = _cube(_require(cfg, "window", context), context)
    intensity = float(_require(cfg, "intensity", context))
    if intensity <= 0:
        raise ConfigError(f"intensity must be positive in {context}")
    fibre_length = cfg.get("fibre_length")
    try:
        if "regions" in cfg:
            spec = _regions(cfg, context)
            return simulate_with_inhomogeneity(window, intensity, spec, rng,
                                               fibre_length=fibre_length), cfg
        model = _model(_require(cfg, "model", context), context)
        return simulate_homogeneous(window, intensity, model, rng,
                                    fibre_length=fibre_length), cfg
    except ConfigError:
        raise
    except (MemoryError, ValueError) as exc:
        raise ConfigError(f"simulation config rejected in {context}: {exc}") from exc


def _load_system(cfg: dict, rng: RandomStream, context: str):
    """A FibreSystem either read from a point cloud or simulated inline."""
    if "points" in cfg:
        window = _cube(_require(cfg, "window", context), context)
        intensity = float(_require(cfg, "intensity", context))
        try:
            return read_point_cloud(cfg["points"], window, intensity,
                                    fibre_length=cfg.get("fibre_length"))
        except (OSError, ValueError) as exc:
            if isinstance(exc, OSError):
                raise
            raise ConfigError(f"bad point cloud for {context}: {exc}") from exc
    return _simulate_from_config(cfg, rng, context)[0]


def _cube_dict(cube: Cube) -> dict:
    return {"origin": cube.origin.tolist(), "side": cube.side}


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: dict, seed: int, out: Path) -> None:
    system, echo = _simulate_from_config(cfg, RandomStream(seed), "simulate")
    write_point_cloud(out / "points.csv", system)
    meta = {
        "command": "simulate",
        "version": __version__,
        "seed": seed,
        "window": _cube_dict(system.window),
        "intensity": system.intensity,
        "fibre_length": system.fibre_length,
        "n_points": len(system),
        "config": echo,
    }
    _write_json(out / "metadata.json", meta)


def cmd_density(cfg: dict, seed: int, out: Path) -> None:
    window = _cube(_require(cfg, "window", "density"), "density")
    intensity = float(_require(cfg, "intensity", "density"))
    kernels = [get_kernel(k) for k in cfg.get("kernels", ["tricube"])]
    grid = SphereGrid.with_min_nodes(int(cfg.get("grid_nodes", 2000)))
    bandwidth = cfg.get("bandwidth")
    models = cfg.get("models")
    if models is None:
        models = [_require(cfg, "model", "density")]
    rng = RandomStream(seed)
    results = []
    for m_idx, model_spec in enumerate(models):
        model = _model(model_spec, "density")
        if "points" in cfg:
            if len(models) > 1:
                raise ConfigError("an external point cloud supports a single model")
            system = read_point_cloud(cfg["points"], window, intensity)
        else:
            system = simulate_homogeneous(window, intensity, model, rng.child(m_idx))
        for kernel in kernels:
            est_cfg = EstimatorConfig(kernel=kernel, bandwidth=bandwidth,
                                      intensity=intensity, window=window)
            err = density_sup_error(system, est_cfg, model, grid)
            results.append({
                "model": model.spec(),
                "kernel": kernel.name,
                "bandwidth": est_cfg.bandwidth,
                "sup_error": err,
                "n_points": len(system),
            })
    report = {
        "command": "density",
        "version": __version__,
        "seed": seed,
        "window": _cube_dict(window),
        "intensity": intensity,
        "grid_size": len(grid),
        "results": results,
    }
    _write_json(out / "density_report.json", report)


def cmd_entropy(cfg: dict, seed: int, out: Path) -> None:
    window = _cube(_require(cfg, "window", "entropy"), "entropy")
    intensity = float(_require(cfg, "intensity", "entropy"))
    model = _model(_require(cfg, "model", "entropy"), "entropy")
    mode = cfg.get("mode", "plain")
    if mode not in ("plain", "modified"):
        raise ConfigError("entropy mode must be 'plain' or 'modified'")
    replications = int(cfg.get("replications", 1))
    if replications < 1:
        raise ConfigError("replications must be at least 1")
    if "points" in cfg and replications != 1:
        raise ConfigError("an external point cloud supports a single replication")
    subwindow = _cube(cfg["subwindow"], "entropy") if "subwindow" in cfg else None
    vol_ref = subwindow.volume if subwindow is not None else window.volume
    est_cfg = EstimatorConfig(kernel=cfg.get("kernel", "tricube"),
                              bandwidth=cfg.get("bandwidth", default_bandwidth(vol_ref)),
                              intensity=intensity, window=window, subwindow=subwindow)
    rng = RandomStream(seed)
    runs = []
    for rep in range(replications):
        stream = rng.child(rep)
        if "points" in cfg:
            system = read_point_cloud(cfg["points"], window, intensity)
        else:
            system = simulate_homogeneous(window, intensity, model, stream.child(0))
        if mode == "modified":
            copy = simulate_homogeneous(window, intensity, model, stream.child(1))
            res = entropy_modified(system, copy, est_cfg)
        else:
            res = entropy_plain(system, est_cfg)
        runs.append(res)
    values = np.array([r.value for r in runs])
    true_value = model.entropy()
    report = {
        "command": "entropy",
        "version": __version__,
        "seed": seed,
        "window": _cube_dict(window),
        "subwindow": _cube_dict(subwindow) if subwindow is not None else None,
        "intensity": intensity,
        "kernel": est_cfg.kernel.name,
        "bandwidth": est_cfg.bandwidth,
        "mode": mode,
        "model": model.spec(),
        "replications": replications,
        "estimates": [r.as_dict() for r in runs],
        "mean": float(values.mean()),
        "sample_variance": float(values.var(ddof=1)) if replications > 1 else None,
        "true_entropy": true_value,
        "absolute_error": abs(float(values.mean()) - true_value),
    }
    _write_json(out / "entropy_report.json", report)


def cmd_clt(cfg: dict, seed: int, out: Path) -> None:
    window = _cube(_require(cfg, "window", "clt"), "clt")
    subwindow = _cube(_require(cfg, "subwindow", "clt"), "clt")
    intensity = float(_require(cfg, "intensity", "clt"))
    model = _model(cfg.get("model", "uniform"), "clt")
    replications = int(_require(cfg, "replications", "clt"))
    if replications < 10:
        raise ConfigError("clt needs at least 10 replications")
    est_cfg = EstimatorConfig(kernel=cfg.get("kernel", "tricube"),
                              bandwidth=cfg.get("bandwidth",
                                                default_bandwidth(subwindow.volume)),
                              intensity=intensity, window=window, subwindow=subwindow)
    stats, norm = clt_study(est_cfg, model, RandomStream(seed), replications,
                            norm_replications=int(cfg.get("norm_replications", 180)),
                            cov_lattice=int(cfg.get("cov_lattice", 343)))
    np.savetxt(out / "statistics.csv", stats, fmt="%.17g", header="statistic",
               comments="")
    ks = scipy_stats.kstest(stats, "norm")
    summary = {
        "command": "clt",
        "version": __version__,
        "seed": seed,
        "window": _cube_dict(window),
        "subwindow": _cube_dict(subwindow),
        "intensity": intensity,
        "kernel": est_cfg.kernel.name,
        "bandwidth": est_cfg.bandwidth,
        "model": model.spec(),
        "replications": replications,
        "mean": float(stats.mean()),
        "variance": float(stats.var(ddof=1)),
        "skewness": float(scipy_stats.skew(stats)),
        "excess_kurtosis": float(scipy_stats.kurtosis(stats)),
        "ks_statistic": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue),
        "last_normalization": {
            "mu_hat": norm.mu_hat,
            "sigma": norm.sigma,
            "var_term": norm.var_term,
            "cov_term": norm.cov_term,
        },
    }
    _write_json(out / "clt_summary.json", summary)


def cmd_scan(cfg: dict, seed: int, out: Path) -> None:
    rng = RandomStream(seed)
    input_cfg = _require(cfg, "input", "scan")
    system = _load_system(input_cfg, rng.child(0), "scan.input")
    scan_cfg = _require(cfg, "scan", "scan")
    window = (_cube(scan_cfg["window"], "scan") if "window" in scan_cfg
              else system.window)
    if "scan_side" in scan_cfg:
        b = float(scan_cfg["scan_side"])
    elif "derive" in scan_cfg:
        d = scan_cfg["derive"]
        a = float(_require(d, "region_side", "scan.derive"))
        alpha_f = float(d.get("alpha_f", 0.05))
        try:
            b, valid = optimal_scan_width(a, window.side, alpha_f)
        except ValueError as exc:
            raise ConfigError(f"cannot derive scanning width: {exc}") from exc
        if not valid:
            raise ConfigError(
                f"derived scanning width {b:.6g} is outside (0, {a:.6g})")
    else:
        raise ConfigError("scan needs either 'scan_side' or 'derive'")
    mode = scan_cfg.get("mode", "plain")
    try:
        run_cfg = ScanConfig(window, b, mesh=scan_cfg.get("mesh"),
                             multiplier=float(scan_cfg.get("multiplier", 3.0)),
                             mode=mode, kernel=scan_cfg.get("kernel", "tricube"),
                             bandwidth=scan_cfg.get("bandwidth"),
                             min_points=int(scan_cfg.get("min_points", 30)))
    except ValueError as exc:
        raise ConfigError(f"invalid scan parameters: {exc}") from exc
    copy = None
    if mode == "modified":
        copy_cfg = cfg.get("copy")
        if copy_cfg is None:
            raise ConfigError("modified mode requires a 'copy' input section")
        copy = _load_system(copy_cfg, rng.child(1), "scan.copy")
    result = detect(system, run_cfg, copy)

    field = result.field
    valid = field.valid
    field_rows = np.column_stack([
        field.nodes,
        np.where(valid, field.values, np.nan),
        valid.astype(float),
    ])
    np.savetxt(out / "field.csv", field_rows, fmt="%.17g", delimiter=",",
               header="x,y,z,entropy,valid", comments="")

    flagged_idx = np.flatnonzero(result.flagged)
    report = {
        "command": "scan",
        "version": __version__,
        "seed": seed,
        "config": run_cfg.as_dict(),
        "stats": {
            "median": result.stats.median,
            "mean": result.stats.mean,
            "variance": result.stats.variance,
            "sigma": result.stats.sigma,
            "n_valid": result.stats.n,
        },
        "lattice": {
            "origin": field.lattice.bounding.origin.tolist(),
            "side": field.lattice.bounding.side,
            "mesh": field.lattice.mesh,
            "n_nodes": len(field.nodes),
        },
        "diagnostics": {
            "n_invalid": int((~valid).sum()),
            "total_clamped": int(field.clamps.sum()),
            "min_count": int(field.counts[valid].min()) if valid.any() else 0,
        },
        "flagged": [
            {
                "point": field.nodes[i].tolist(),
                "entropy": float(field.values[i]),
                "deviation": float(result.deviations[i]),
            }
            for i in flagged_idx
        ],
        "n_flagged": int(len(flagged_idx)),
    }
    if "true_regions" in cfg:
        regions = [_cube(r, "scan.true_regions") for r in cfg["true_regions"]]
        quality = detection_quality(regions, result)
        # rates over empty node classes are NaN, which is not valid JSON
        def clean(v):
            if isinstance(v, float) and not np.isfinite(v):
                return None
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v

        report["quality"] = {k: clean(v) for k, v in quality.items()}
        report["dvol"] = dvol_estimate(regions, result)
        if len(regions) == 1 and "alpha_f" in cfg:
            report["dvol_bound"] = dvol_bound(regions[0].side, window.side, b,
                                              float(cfg["alpha_f"]))
    _write_json(out / "detection_report.json", report)


_COMMANDS = {
    "simulate": cmd_simulate,
    "density": cmd_density,
    "entropy": cmd_entropy,
    "clt": cmd_clt,
    "scan": cmd_scan,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fibrescan",
        description="Fibre-system simulation and inhomogeneity detection.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="root seed (overrides the config's seed)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=0,
                       help="worker thread cap (0 = auto)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        if args.threads < 0:
            raise ConfigError("thread count must be nonnegative")
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](cfg, seed, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ArithmeticError, MemoryError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
