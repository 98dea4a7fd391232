"""Run reporting: metrics CSV, JSON manifests, and figure rendering.

Every CLI command that writes results drops a manifest next to them so a
run can be audited later: the exact command, the configuration snapshot,
input/output paths, and the metrics. CSV columns are fixed so downstream
tooling can rely on them.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from math import isfinite
from pathlib import Path

import numpy as np

METRIC_COLUMNS = ["method", "param", "mse", "wall_time_s", "restoring_proportion"]

# Methods reported by other implementations; rows are emitted with empty
# metric cells so external numbers can be pasted in for comparison.
PLACEHOLDER_METHODS = ["RTTSVD", "TGGKB", "TGGMRES"]

__all__ = [
    "METRIC_COLUMNS",
    "PLACEHOLDER_METHODS",
    "write_metrics_csv",
    "read_metrics_csv",
    "write_manifest",
    "read_manifest",
    "solver_config_dict",
    "experiment_config_dict",
    "result_metrics_dict",
    "scatter_figure",
    "image_panel",
]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if not isfinite(value):
            return ""
        return repr(value)
    return str(value)


def write_metrics_csv(path, rows: list[dict]) -> None:
    """Write metric rows with the fixed column set (RFC-4180 quoting)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for row in rows:
            writer.writerow([_cell(row.get(col)) for col in METRIC_COLUMNS])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _sanitize(obj):
    """Make a structure JSON-clean: paths to strings, non-finite to None."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def solver_config_dict(config) -> dict:
    return {
        "max_iter": config.max_iter,
        "tol": config.tol,
        "scheme": config.canonical_scheme,
        "normalization": config.normalization,
        "mu_mode": config.mu_mode,
        "constraint_bound": config.constraint_bound,
        "x0": None if config.x0 is None else "user-supplied",
    }


def experiment_config_dict(config) -> dict:
    return {
        "n": config.n,
        "sigma": config.sigma,
        "band": config.band,
        "eta": config.eta,
        "seed": config.seed,
        "regularizer": config.regularizer,
        "solver": solver_config_dict(config.solver),
    }


def result_metrics_dict(result) -> dict:
    return _sanitize(
        {
            "blurred_mse": result.blurred_mse,
            "deblurred_mse": result.deblurred_mse,
            "restoring_proportion": result.restoring_proportion,
            "constraint_norm": result.constraint_norm,
            "wall_time_s": result.wall_time_s,
            "converged": result.converged,
            "slice_reports": [r.as_dict() for r in result.reports],
        }
    )


def write_manifest(path, command: str, config: dict, input_paths, output_paths,
                   metrics: dict | None) -> None:
    """Persist the audit record for one command invocation."""
    doc = {
        "command": command,
        "config": _sanitize(config),
        "input_paths": [str(q) for q in input_paths],
        "output_paths": [str(q) for q in output_paths],
        "metrics": _sanitize(metrics) if metrics is not None else None,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)
    json.loads(text)  # round-trip guarantee before anything is written
    with open(path, "w") as fh:
        fh.write(text + "\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def scatter_figure(path, points: list[dict]) -> None:
    """MSE-versus-time scatter with one labeled marker per method row."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ttsvd = [q for q in points if q["method"] == "ttsvd"]
    others = [q for q in points if q["method"] != "ttsvd"]
    if ttsvd:
        ax.plot(
            [q["wall_time_s"] for q in ttsvd],
            [q["mse"] for q in ttsvd],
            "o",
            ms=4,
            alpha=0.7,
            label="ttsvd (k sweep)",
        )
    for q in others:
        ax.plot(q["wall_time_s"], q["mse"], "s", ms=8, label=q["method"])
    ax.set_xlabel("wall time [s]")
    ax.set_ylabel("MSE")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def image_panel(path, images: list[tuple[str, np.ndarray]]) -> None:
    """Side-by-side grayscale panels (clamped to [0,1] for display)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    count = len(images)
    fig, axes = plt.subplots(1, count, figsize=(3.2 * count, 3.4))
    if count == 1:
        axes = [axes]
    for ax, (title, img) in zip(axes, images):
        ax.imshow(np.clip(img, 0.0, 1.0), cmap="gray", vmin=0.0, vmax=1.0)
        ax.set_title(title, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
