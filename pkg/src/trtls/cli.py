"""Command-line interface: operator generation, blur simulation, deblur
runs, and the TTSVD benchmark.

Every command that writes results also drops a JSON manifest next to them
recording the command line, configuration, inputs, outputs, and metrics.
Exit codes are a stable contract:

    0  success
    2  usage error (bad flags; argparse reports these)
    3  I/O, format, or shape error
    4  solver did not converge on every slice (results are still written)

``TRTLS_THREADS`` caps the worker threads used for multi-slice solves;
unset means serial. Results are identical at any thread count.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .algebra import spectral_conds, tprod
from .baseline import ttsvd_sweep
from .errors import FormatError, ShapeError, TrtlsError
from .imgio import (
    load_tensor,
    pack_planes,
    read_frames,
    read_image,
    save_tensor,
    unpack_planes,
    write_image,
)
from .pipeline import (
    ExperimentConfig,
    add_noise,
    bundled_image,
    gaussian_blur_tensor,
    operator_scale,
    reg_operator,
    run_experiment_full,
    tikhonov_start,
)
from .report import (
    PLACEHOLDER_METHODS,
    experiment_config_dict,
    image_panel,
    result_metrics_dict,
    scatter_figure,
    solver_config_dict,
    write_manifest,
    write_metrics_csv,
)
from .solver import SolverConfig, solve_multi
from .tensor import DenseTensor3, mse

__all__ = ["main"]


def _manifest_path(out: Path) -> Path:
    if out.is_dir():
        return out / "manifest.json"
    return out.with_suffix(".manifest.json")


def _parse_k_sweep(text: str) -> list[int]:
    """Parse 'a:b:step' (inclusive), 'a:b' (step 1), or a single 'k'."""
    parts = text.split(":")
    if len(parts) not in (1, 2, 3):
        raise ValueError(f"expected a, a:b or a:b:step, got {text!r}")
    try:
        nums = [int(q) for q in parts]
    except ValueError as exc:
        raise ValueError(f"non-integer in k sweep {text!r}") from exc
    if len(nums) == 1:
        lo = hi = nums[0]
        step = 1
    else:
        lo, hi = nums[0], nums[1]
        step = nums[2] if len(nums) == 3 else 1
    if lo < 1 or hi < lo or step < 1:
        raise ValueError(f"k sweep bounds must satisfy 1 <= a <= b, step >= 1: {text!r}")
    return list(range(lo, hi + 1, step))


def _split_channels(img: np.ndarray) -> list[np.ndarray]:
    if img.ndim == 2:
        return [img]
    return [img[:, :, c] for c in range(3)]


def _load_planes(
    in_path: str | None, frames_dir: str | None
) -> tuple[list[np.ndarray], list[tuple[str, int]]]:
    """Read the input image(s) as grayscale planes.

    Returns the flat plane list plus a layout of (stem, channels) per
    source image so color channels can be rejoined on output.
    """
    planes: list[np.ndarray] = []
    layout: list[tuple[str, int]] = []
    if in_path is not None:
        img = read_image(in_path)
        chans = _split_channels(img)
        planes.extend(chans)
        layout.append((Path(in_path).stem, len(chans)))
    else:
        for name, img in read_frames(frames_dir):
            chans = _split_channels(img)
            planes.extend(chans)
            layout.append((Path(name).stem, len(chans)))
    first = planes[0].shape
    for q in planes:
        if q.shape != first:
            raise ShapeError(f"input planes disagree in shape: {first} vs {q.shape}")
    return planes, layout


def _write_planes(
    out_dir: Path, stem: str, planes: list[np.ndarray], layout: list[tuple[str, int]]
) -> list[Path]:
    """Rejoin planes per the recorded layout and write image files."""
    written = []
    pos = 0
    multi = len(layout) > 1
    for idx, (name, channels) in enumerate(layout):
        group = planes[pos : pos + channels]
        pos += channels
        img = group[0] if channels == 1 else np.stack(group, axis=2)
        suffix = ".pgm" if channels == 1 else ".ppm"
        base = f"{stem}_{idx:03d}{suffix}" if multi else f"{stem}{suffix}"
        path = out_dir / base
        write_image(path, img)
        written.append(path)
    return written


def _first_plane(x: DenseTensor3) -> np.ndarray:
    return x.data[:, 0, :]


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        max_iter=args.max_iter,
        tol=args.tol,
        scheme=args.scheme,
        normalization=args.normalization,
    )


def _warm_start(a, b, k, start_alpha: float):
    if start_alpha <= 0.0:
        return None
    return tikhonov_start(a, b, k, start_alpha * operator_scale(a))


def _print_reports(reports) -> None:
    for j, rep in enumerate(reports):
        err = "" if rep.error is None else f"  error={rep.error}"
        print(
            f"slice {j}: converged={rep.converged} iterations={rep.iterations} "
            f"rel={rep.final_relative_change:.3e} rho={rep.final_rho:.3e}{err}"
        )


# ---------------------------------------------------------------------------
# commands


def cmd_gen_operator(args) -> int:
    config = ExperimentConfig(n=args.n, sigma=args.sigma, band=args.band, eta=0.0)
    a = gaussian_blur_tensor(config)
    out = Path(args.out)
    save_tensor(out, a)
    conds = spectral_conds(a)
    print(
        "spectral condition numbers: "
        f"min={conds.min():.6e} median={np.median(conds):.6e} max={conds.max():.6e}"
    )
    write_manifest(
        _manifest_path(out),
        "gen-operator",
        {"n": args.n, "sigma": args.sigma, "band": args.band},
        [],
        [out],
        {
            "cond_min": float(conds.min()),
            "cond_median": float(np.median(conds)),
            "cond_max": float(conds.max()),
        },
    )
    print(f"wrote {out}")
    return 0


def cmd_blur(args) -> int:
    planes, layout = _load_planes(args.in_path, args.frames_dir)
    h, w = planes[0].shape
    if h != w:
        raise ShapeError(f"blur needs square planes, got {h} x {w}")
    if args.operator is not None:
        a_true = load_tensor(args.operator)
        if a_true.shape != (h, h, h):
            raise ShapeError(
                f"operator is {a_true.shape}, expected {(h, h, h)} for this input"
            )
    else:
        a_true = gaussian_blur_tensor(
            ExperimentConfig(n=h, sigma=args.sigma, band=args.band, eta=0.0)
        )
    x_true = pack_planes(planes)
    b_true = tprod(a_true, x_true)
    a_obs = add_noise(a_true, args.eta, args.seed, stream=0)
    b_obs = add_noise(b_true, args.eta, args.seed, stream=1)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _write_planes(out_dir, "blurred", unpack_planes(b_obs), layout)
    for name, tens in (("a_observed.tns3", a_obs), ("b_observed.tns3", b_obs)):
        path = out_dir / name
        save_tensor(path, tens)
        outputs.append(path)
    blur_mse = mse(b_obs, x_true)
    print(f"blurred MSE against input: {blur_mse:.6e}")
    write_manifest(
        _manifest_path(out_dir),
        "blur",
        {
            "sigma": args.sigma,
            "band": args.band,
            "eta": args.eta,
            "seed": args.seed,
            "operator": args.operator,
        },
        [args.in_path or args.frames_dir],
        outputs,
        {"blurred_mse": blur_mse},
    )
    return 0


def cmd_deblur(args) -> int:
    a = load_tensor(args.operator)
    layout = None
    if args.in_path is not None and args.in_path.lower().endswith(".tns3"):
        b = load_tensor(args.in_path)
        inputs = [args.operator, args.in_path]
    else:
        planes, layout = _load_planes(args.in_path, args.frames_dir)
        b = pack_planes(planes)
        inputs = [args.operator, args.in_path or args.frames_dir]
    if b.m != a.m or b.p != a.p:
        raise ShapeError(f"operator {a.shape} does not accept observation {b.shape}")

    k = reg_operator(args.reg, a.n, a.p)
    config = _solver_config(args)
    t0 = time.perf_counter()
    x0 = _warm_start(a, b, k, args.start_alpha)
    x_sol, reports = solve_multi(a, b, k, config, x0=x0)
    wall = time.perf_counter() - t0
    converged = all(r.converged for r in reports)
    _print_reports(reports)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if layout is None:
        layout = [(f"plane{j}", 1) for j in range(x_sol.n)]
    outputs = _write_planes(out_dir, "restored", unpack_planes(x_sol), layout)
    x_path = out_dir / "x_solved.tns3"
    save_tensor(x_path, x_sol)
    outputs.append(x_path)

    deblurred = blurred = restoring = None
    if args.truth is not None:
        truth_planes, _ = (
            _load_planes(args.truth, None)
            if not Path(args.truth).is_dir()
            else _load_planes(None, args.truth)
        )
        x_true = pack_planes(truth_planes)
        if x_true.shape != x_sol.shape:
            raise ShapeError(
                f"truth shape {x_true.shape} does not match solution {x_sol.shape}"
            )
        blurred = mse(b, x_true)
        deblurred = mse(x_sol, x_true)
        restoring = None if blurred == 0.0 else 1.0 - deblurred / blurred
        print(
            f"blurred MSE {blurred:.6e}  deblurred MSE {deblurred:.6e}  "
            f"restoring proportion {restoring:.4f}"
        )

    csv_path = out_dir / "metrics.csv"
    write_metrics_csv(
        csv_path,
        [
            {
                "method": "trtls",
                "param": config.canonical_scheme,
                "mse": deblurred,
                "wall_time_s": wall,
                "restoring_proportion": restoring,
            }
        ],
    )
    outputs.append(csv_path)

    panel = [("blurred", _first_plane(b)), ("restored", _first_plane(x_sol))]
    if args.truth is not None:
        panel.append(("truth", _first_plane(x_true)))
    panel_path = out_dir / "panel.png"
    image_panel(panel_path, panel)
    outputs.append(panel_path)

    write_manifest(
        _manifest_path(out_dir),
        "deblur",
        {
            "regularizer": args.reg,
            "start_alpha": args.start_alpha,
            "solver": solver_config_dict(config),
        },
        inputs,
        outputs,
        {
            "converged": converged,
            "wall_time_s": wall,
            "blurred_mse": blurred,
            "deblurred_mse": deblurred,
            "restoring_proportion": restoring,
            "slice_reports": [r.as_dict() for r in reports],
        },
    )
    return 0 if converged else 4


def _benchmark_settings(args) -> dict:
    settings = {
        "n": 64,
        "sigma": 4.0,
        "band": 7,
        "eta": 0.001,
        "seed": 0,
        "regularizer": "k1",
        "scheme": "tensor",
        "normalization": "tube",
        "max_iter": 4,
        "tol": 1e-3,
        "start_alpha": 0.05,
        "k_sweep": "2:64:2",
        "image": None,
    }
    if args.config is not None:
        with open(args.config) as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(settings)
        if unknown:
            raise FormatError(f"{args.config}: unknown config keys {sorted(unknown)}")
        settings.update(loaded)
    overrides = {
        "n": args.n,
        "sigma": args.sigma,
        "band": args.band,
        "eta": args.eta,
        "seed": args.seed,
        "regularizer": args.reg,
        "scheme": args.scheme,
        "normalization": args.normalization,
        "max_iter": args.max_iter,
        "tol": args.tol,
        "start_alpha": args.start_alpha,
        "k_sweep": args.k_sweep,
        "image": args.in_path,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return settings


def cmd_benchmark(args) -> int:
    st = _benchmark_settings(args)
    sweep = st["k_sweep"]
    ks = sweep if isinstance(sweep, list) else _parse_k_sweep(str(sweep))
    if st["image"] is None:
        try:
            truth_img = bundled_image(f"city_{st['n']}")
        except FileNotFoundError as exc:
            raise FormatError(
                f"no bundled test image for n={st['n']}; pass --in"
            ) from exc
        source = f"bundled city_{st['n']}"
        planes = [truth_img]
    else:
        planes, _ = _load_planes(st["image"], None)
        source = str(st["image"])
        st["n"] = planes[0].shape[0]
    x_true = pack_planes(planes)

    config = ExperimentConfig(
        n=st["n"],
        sigma=st["sigma"],
        band=st["band"],
        eta=st["eta"],
        seed=st["seed"],
        regularizer=st["regularizer"],
        solver=SolverConfig(
            max_iter=st["max_iter"],
            tol=st["tol"],
            scheme=st["scheme"],
            normalization=st["normalization"],
        ),
        start_alpha=None if st["start_alpha"] <= 0.0 else st["start_alpha"],
    )
    run = run_experiment_full(x_true, config)
    res = run.result
    print(
        f"trtls: mse={res.deblurred_mse:.6e} wall={res.wall_time_s:.3f}s "
        f"restoring={res.restoring_proportion:.4f} converged={res.converged}"
    )

    rows = [
        {
            "method": "trtls",
            "param": config.solver.canonical_scheme,
            "mse": res.deblurred_mse,
            "wall_time_s": res.wall_time_s,
            "restoring_proportion": res.restoring_proportion,
        }
    ]
    for k, x_k, wall_k in ttsvd_sweep(run.a_observed, run.b_observed, ks):
        mse_k = mse(x_k, x_true)
        rows.append(
            {
                "method": "ttsvd",
                "param": k,
                "mse": mse_k,
                "wall_time_s": wall_k,
                "restoring_proportion": None
                if res.blurred_mse == 0.0
                else 1.0 - mse_k / res.blurred_mse,
            }
        )
    best = min(rows[1:], key=lambda q: q["mse"])
    print(f"ttsvd best: k={best['param']} mse={best['mse']:.6e}")
    print(f"trtls dominates ttsvd sweep: {res.deblurred_mse <= best['mse']}")
    for method in PLACEHOLDER_METHODS:
        rows.append({"method": method})

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "metrics.csv"
    write_metrics_csv(csv_path, rows)
    scatter_path = out_dir / "scatter.png"
    scatter_figure(scatter_path, [q for q in rows if q.get("mse") is not None])
    write_manifest(
        _manifest_path(out_dir),
        "benchmark",
        {
            "experiment": experiment_config_dict(config),
            "start_alpha": st["start_alpha"],
            "k_sweep": ks,
            "image": source,
        },
        [] if st["image"] is None else [st["image"]],
        [csv_path, scatter_path],
        result_metrics_dict(res),
    )
    return 0 if res.converged else 4


# ---------------------------------------------------------------------------
# argument wiring


def _add_solver_flags(sub, with_defaults: bool) -> None:
    """Solver knobs shared by deblur and benchmark.

    Benchmark leaves the defaults at None so a config file can fill them;
    deblur applies the working deblurring configuration directly.
    """
    d = (
        dict(scheme="tensor", normalization="tube", max_iter=4, tol=1e-3,
             start_alpha=0.05, reg="k1")
        if with_defaults
        else dict(scheme=None, normalization=None, max_iter=None, tol=None,
                  start_alpha=None, reg=None)
    )
    sub.add_argument("--reg", choices=("k1", "k2", "identity"), default=d["reg"],
                     help="regularization operator (default k1)")
    sub.add_argument("--scheme", choices=("tensor", "matrix"), default=d["scheme"],
                     help="iteration scheme (default tensor)")
    sub.add_argument("--normalization", choices=("tube", "scalar_entry"),
                     default=d["normalization"],
                     help="eigenvector normalization (default tube)")
    sub.add_argument("--max-iter", type=int, default=d["max_iter"],
                     help="iteration budget (default 4)")
    sub.add_argument("--tol", type=float, default=d["tol"],
                     help="relative-change stopping tolerance (default 1e-3)")
    sub.add_argument("--start-alpha", type=float, default=d["start_alpha"],
                     help="ridge warm-start weight relative to the operator's "
                          "spectral energy; 0 uses the solver's built-in start "
                          "(default 0.05)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trtls",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-operator", help="write a Gaussian blur tensor as TNS3")
    g.add_argument("--n", type=int, required=True, help="operator order")
    g.add_argument("--sigma", type=float, required=True, help="Gaussian width")
    g.add_argument("--band", type=int, required=True, help="stencil half-width")
    g.add_argument("--out", required=True, help="output TNS3 path")
    g.set_defaults(func=cmd_gen_operator)

    b = sub.add_parser("blur", help="blur an image (or frames) and add noise")
    b.add_argument("--in", dest="in_path", help="input PGM/PPM image")
    b.add_argument("--frames-dir", help="directory of PGM/PPM frames")
    b.add_argument("--operator", help="use this TNS3 operator instead of building one")
    b.add_argument("--sigma", type=float, default=4.0, help="Gaussian width (default 4)")
    b.add_argument("--band", type=int, default=7, help="stencil half-width (default 7)")
    b.add_argument("--eta", type=float, default=0.0,
                   help="relative noise level for operator and observation")
    b.add_argument("--seed", type=int, default=0, help="noise seed")
    b.add_argument("--out", required=True, help="output directory")
    b.set_defaults(func=cmd_blur)

    d = sub.add_parser("deblur", help="restore an image from operator + observation")
    d.add_argument("--operator", required=True, help="TNS3 blur operator")
    d.add_argument("--in", dest="in_path",
                   help="observation: TNS3 tensor or PGM/PPM image")
    d.add_argument("--frames-dir", help="directory of observed PGM/PPM frames")
    d.add_argument("--truth", help="ground-truth image (or frames dir) for metrics")
    _add_solver_flags(d, with_defaults=True)
    d.add_argument("--out", required=True, help="output directory")
    d.set_defaults(func=cmd_deblur)

    c = sub.add_parser("benchmark", help="TR-TLS against a TTSVD truncation sweep")
    c.add_argument("--config", help="JSON experiment config; flags override it")
    c.add_argument("--n", type=int, help="problem size (default 64)")
    c.add_argument("--sigma", type=float, help="Gaussian width (default 4)")
    c.add_argument("--band", type=int, help="stencil half-width (default 7)")
    c.add_argument("--eta", type=float, help="noise level (default 0.001)")
    c.add_argument("--seed", type=int, help="noise seed (default 0)")
    c.add_argument("--in", dest="in_path",
                   help="truth image (default: bundled city scene at n)")
    c.add_argument("--ttsvd-k-sweep", dest="k_sweep", metavar="A:B:STEP",
                   type=_parse_k_sweep,
                   help="inclusive truncation sweep (default 2:64:2)")
    _add_solver_flags(c, with_defaults=False)
    c.add_argument("--out", required=True, help="output directory")
    c.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("blur", "deblur"):
        given = [q for q in (args.in_path, args.frames_dir) if q is not None]
        if len(given) != 1:
            parser.error("exactly one of --in / --frames-dir is required")
    try:
        return args.func(args)
    except (OSError, ValueError, TrtlsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
