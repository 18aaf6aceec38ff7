"""Command-line harness: ``cluster``, ``sweep``, ``influence`` and ``quantize``.

Exit codes: 0 on success, 2 on input errors, 3 on numerical failures.
Errors are printed to stderr as a one-line JSON object.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio, influence
from .core import ClusteringConfig, fit, fit_to_target_k, single_cluster_max_distortion
from .divergences import Alpha, Binomial, DivergenceSpec, ExpLoss, SquaredDistance
from .errors import GDPMeansError, InputError, NumericalError, Unsupported
from .fgen import Linear, LogSumExp, PowerMean, effective_beta
from .metrics import cluster_sizes, nmi

log = logging.getLogger("gdpmeans")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
DEFAULT_SHUFFLES, FULL_SHUFFLES = 10, 100
DEFAULT_MAX_STEPS = 2000


# -- serialization -------------------------------------------------------------


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dump_json(obj, path=None) -> str:
    text = json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _fmt6(x) -> str:
    return "nan" if x is None or not math.isfinite(x) else f"{x:.6g}"


# -- building blocks from arguments ------------------------------------------


def build_divergence(args) -> DivergenceSpec:
    kind = args.div
    dim_average = args.dim_average
    if kind == "sqdist-avg":
        kind, dim_average = "sqdist", True
    if kind == "sqdist":
        gen = SquaredDistance()
    elif kind == "alpha":
        gen = Alpha(args.alpha)
    elif kind == "exploss":
        gen = ExpLoss()
    elif kind == "binomial":
        if args.binomial_n is None:
            raise InputError("--div binomial needs --binomial-n")
        gen = Binomial(args.binomial_n)
    else:  # argparse restricts the choices
        raise InputError(f"unknown divergence {kind!r}")
    return DivergenceSpec(gen, tbd_c=args.tbd_c, dim_average=dim_average)


def build_f(kind: str, beta: float | None, a: float = 0.0):
    if kind == "linear":
        return Linear()
    if beta is None:
        raise InputError(f"--f {kind} needs --beta or --beta-star")
    if kind == "pow":
        return PowerMean(beta, a)
    if kind == "lse":
        return LogSumExp(beta)
    raise InputError(f"unknown f family {kind!r}")


def _resolve_beta(args, L: int) -> tuple[float | None, dict]:
    """Apply the log-sum-exp dimension mapping when ``--beta-star`` is given."""
    if args.beta_star is None:
        return args.beta, {}
    if args.f != "lse":
        raise InputError("--beta-star applies to --f lse only")
    if args.beta is not None:
        raise InputError("give either --beta or --beta-star, not both")
    beta = effective_beta(args.beta_star, L)
    return beta, {"beta_star": args.beta_star, "effective_beta": beta, "L": L}


def _load_dataset(args) -> dataio.Dataset:
    ds = dataio.load_csv(args.input, args.label)
    if args.label_map:
        ds = dataio.apply_label_map(ds, dataio.load_label_map(args.label_map))
    if args.standardize:
        ds = dataio.standardize(ds)
    return ds


def _config(args, lam: float) -> ClusteringConfig:
    return ClusteringConfig(lam=lam, delta=args.delta, optimizer=args.optimizer)


# -- cluster -----------------------------------------------------------------------


def cmd_cluster(args) -> int:
    ds = _load_dataset(args)
    beta, meta = _resolve_beta(args, ds.L)
    f = build_f(args.f, beta, args.a)
    div = build_divergence(args)
    data = ds.data
    perm = np.arange(ds.n)
    if args.seed is not None:
        perm = np.random.default_rng(args.seed).permutation(ds.n)
    res = fit(f, div, data[perm], _config(args, args.lam))
    labels = np.empty(ds.n, dtype=np.int64)
    labels[perm] = res.state.labels
    out = {
        "f": f.describe(),
        "divergence": div.describe(),
        "lambda": args.lam,
        "n": ds.n,
        "L": ds.L,
        "standardized": bool(args.standardize),
        "dropped_rows": ds.dropped_rows,
        "K": res.K,
        "labels": labels,
        "cluster_sizes": cluster_sizes(labels),
        "centers": res.state.centers,
        "objective": res.objective,
        "fmean_objective": res.fmean_objective,
        "avg_distortion": res.avg_distortion,
        "max_distortion": res.max_distortion,
        "iterations": res.iterations,
        "converged": res.converged,
        "notes": res.notes,
    }
    if meta:
        out["metadata"] = meta
    if ds.true_labels is not None:
        out["nmi"] = nmi(labels, ds.true_labels)
    _emit(dump_json(out), args, "cluster.json")
    return EXIT_OK


def _emit(text: str, args, name: str) -> None:
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    else:
        sys.stdout.write(text)


# -- sweep ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    betas: tuple
    f_kind: str
    a: float
    div: DivergenceSpec
    n_shuffles: int = DEFAULT_SHUFFLES
    decay: float = 1.01
    lambdas: tuple | None = None
    k_cap_multiplier: float = 3.0
    max_steps: int = DEFAULT_MAX_STEPS
    seed: int = 0
    delta: float | None = None
    beta_is_star: bool = False

    def __post_init__(self):
        if not self.betas:
            raise InputError("the beta grid is empty")
        if not self.decay > 1:
            raise InputError("the lambda decay factor must exceed 1")
        if self.n_shuffles < 1:
            raise InputError("the number of shuffles must be positive")
        if self.lambdas is not None and (not self.lambdas or min(self.lambdas) <= 0):
            raise InputError("explicit lambda values must be positive")


@dataclass(frozen=True)
class SweepRow:
    beta: float
    lam: float
    mean_K: float
    mean_nmi: float
    mean_maxdist: float


def beta_grid(lo: float, hi: float, step: float) -> tuple:
    if step <= 0 or hi < lo:
        raise InputError("beta grid needs step > 0 and max >= min")
    count = math.floor((hi - lo) / step + 1e-9) + 1
    return tuple(round(lo + i * step, 10) for i in range(count))


def _sweep_f(cfg: SweepConfig, beta: float, L: int):
    b = effective_beta(beta, L) if cfg.beta_is_star else beta
    return build_f(cfg.f_kind, b, cfg.a)


def shuffle_orders(n: int, cfg: SweepConfig) -> list:
    return [np.random.default_rng([cfg.seed, s]).permutation(n) for s in range(cfg.n_shuffles)]


def run_cell(cfg: SweepConfig, data, labels, beta: float, lam: float, order) -> tuple:
    """One fit on one shuffled copy: ``(K, NMI, max distortion)``."""
    f = _sweep_f(cfg, beta, data.shape[1])
    res = fit(f, cfg.div, data[order], ClusteringConfig(lam=lam, delta=cfg.delta))
    return res.K, nmi(res.state.labels, labels[order]), res.max_distortion


def initial_lambda(cfg: SweepConfig, data) -> float:
    """Largest single-cluster maximum distortion over the beta grid."""
    cfg_probe = ClusteringConfig(lam=1.0, delta=cfg.delta)
    return max(
        single_cluster_max_distortion(_sweep_f(cfg, b, data.shape[1]), cfg.div, data, cfg_probe)
        for b in cfg.betas
    )


def run_sweep(cfg: SweepConfig, ds: dataio.Dataset, on_row=None) -> dict:
    """Grid of (beta, lambda) cells averaged over seeded shuffles.

    Each beta walks the same lambda schedule ``lam_t = lam_0 / decay**t``
    starting at the largest single-cluster maximum distortion.  A chain stops
    after the first cell whose mean ``K`` exceeds ``k_cap_multiplier`` times
    the number of true classes, or after ``max_steps`` cells.  Every cell is
    an independent fit, so the result does not depend on evaluation order.
    """
    if ds.true_labels is None:
        raise InputError("a sweep needs true labels (--label)")
    data, labels = ds.data, ds.true_labels
    k_true = len(np.unique(labels))
    orders = shuffle_orders(ds.n, cfg)
    lam0 = None if cfg.lambdas is not None else initial_lambda(cfg, data)
    k_cap = cfg.k_cap_multiplier * k_true
    rows = []
    for beta in cfg.betas:
        schedule = cfg.lambdas if cfg.lambdas is not None else (lam0 / cfg.decay**t for t in range(cfg.max_steps))
        for lam in schedule:
            cells = [run_cell(cfg, data, labels, beta, lam, o) for o in orders]
            Ks, nmis, maxd = (np.array(c, dtype=float) for c in zip(*cells))
            row = SweepRow(beta, lam, Ks.mean(), nmis.mean(), maxd.mean())
            rows.append(row)
            if on_row is not None:
                on_row(row)
            if cfg.lambdas is None and row.mean_K > k_cap:
                break
    return {"rows": rows, "lambda_initial": lam0, "K_true": k_true}


SWEEP_COLUMNS = ["beta", "lambda", "mean_K", "mean_NMI", "mean_maxdist"]


def _sweep_row_cells(row: SweepRow) -> list:
    return [_fmt6(row.beta), _fmt6(row.lam), _fmt6(row.mean_K), _fmt6(row.mean_nmi), _fmt6(row.mean_maxdist)]


def cmd_sweep(args) -> int:
    ds = _load_dataset(args)
    if args.beta is not None:
        betas = tuple(args.beta)
    else:
        betas = beta_grid(args.beta_min, args.beta_max, args.beta_step)
    if args.f == "linear":
        betas = (1.0,)
    div = build_divergence(args)
    shuffles = args.shuffles if args.shuffles is not None else (FULL_SHUFFLES if args.paper_scale else DEFAULT_SHUFFLES)
    cfg = SweepConfig(
        betas=betas,
        f_kind="pow" if args.f == "linear" else args.f,
        a=args.a,
        div=div,
        n_shuffles=shuffles,
        decay=args.lambda_decay,
        lambdas=tuple(args.lam) if args.lam else None,
        k_cap_multiplier=args.k_cap_multiplier,
        max_steps=args.max_steps,
        seed=args.seed if args.seed is not None else 0,
        delta=args.delta,
        beta_is_star=args.f == "lse" and div.dim_average,
    )
    out_dir = Path(args.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "sweep.csv"
    # rows are flushed as they complete so an interrupt keeps partial results
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)

        def on_row(row):
            writer.writerow(_sweep_row_cells(row))
            fh.flush()

        result = run_sweep(cfg, ds, on_row)
    meta = {
        "csv": csv_path.name,
        "f": cfg.f_kind,
        "a": cfg.a,
        "divergence": div.describe(),
        "n": ds.n,
        "L": ds.L,
        "K_true": result["K_true"],
        "lambda_initial": result["lambda_initial"],
        "lambda_decay": cfg.decay,
        "shuffles": cfg.n_shuffles,
        "seed": cfg.seed,
        "k_cap_multiplier": cfg.k_cap_multiplier,
        "standardized": bool(args.standardize),
        "betas": list(cfg.betas),
    }
    if cfg.beta_is_star:
        meta["effective_beta"] = {repr(b): effective_beta(b, ds.L) for b in cfg.betas}
    dump_json(meta, out_dir / "sweep_meta.json")
    return EXIT_OK


# -- influence ---------------------------------------------------------------


def _default_grid(div: DivergenceSpec, theta: float, args):
    gen = div.generator
    if isinstance(gen, Binomial):
        lo = 0.0 if args.x_min is None else args.x_min
        hi = float(gen.n) if args.x_max is None else args.x_max
        num = args.num or round(hi - lo) + 1
        return (lo, hi, num)
    positive = isinstance(gen, Alpha) and not gen.real_domain
    lo = args.x_min if args.x_min is not None else (1e-3 if positive else theta - 10.0)
    hi = args.x_max if args.x_max is not None else theta + 10.0
    return (lo, hi, args.num or 401)


def _curve_name(f, div) -> str:
    raw = f"if_{f.describe()}_{div.describe()}"
    return "".join(c if c.isalnum() or c in "-._" else "_" for c in raw) + ".csv"


def cmd_influence(args) -> int:
    div = build_divergence(args)
    out_dir = Path(args.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    betas = args.beta if args.beta else [None]
    if args.f == "linear":
        betas = [None]
    cluster = None
    if args.input:
        cluster = dataio.load_csv(args.input, args.label).data
    report = []
    for beta in betas:
        f = build_f(args.f, beta, args.a)
        entry = {"f": f.describe(), "divergence": div.describe(), "theta": args.theta}
        try:
            entry["robustness_class"] = influence.classify_robustness(f, div).value
        except Unsupported as exc:
            entry["robustness_class"] = None
            entry["unsupported"] = str(exc)
        curve = influence.influence_curve_1d(f, div, args.theta, _default_grid(div, args.theta, args))
        name = _curve_name(f, div)
        influence.write_curve_csv(out_dir / name, curve)
        entry["curve_csv"] = name
        if cluster is not None and args.x_star is not None:
            rep = influence.influence_report(f, div, cluster, args.x_star)
            entry["analytic_if"] = rep.analytic_if
            entry["empirical_if"] = rep.empirical_if
        report.append(entry)
    dump_json({"curves": report}, out_dir / "influence_report.json")
    return EXIT_OK


# -- quantize ------------------------------------------------------------------


def cmd_quantize(args) -> int:
    image = dataio.read_ppm(args.image)
    ib = dataio.blockify(image)
    ds = dataio.Dataset(ib.blocks)
    scale = np.ones(ds.L)
    if args.standardize:
        scale = np.sqrt(np.mean(ds.data**2, axis=0))
        ds = dataio.standardize(ds)
    beta, meta = _resolve_beta(args, ds.L)
    f = build_f(args.f, beta, args.a)
    div = build_divergence(args)
    data = ds.data
    perm = np.arange(ds.n)
    if args.seed is not None:
        perm = np.random.default_rng(args.seed).permutation(ds.n)
    if args.target_k is not None:
        res = fit_to_target_k(f, div, data[perm], args.target_k, _config(args, 1.0))
    elif args.lam is not None:
        res = fit(f, div, data[perm], _config(args, args.lam))
    else:
        raise InputError("quantize needs --lambda or --target-k")
    labels = np.empty(ds.n, dtype=np.int64)
    labels[perm] = res.state.labels
    centers = res.state.centers * scale
    recon = dataio.quantized_image(ib, centers, labels)
    err = ((recon.astype(float) - image.astype(float)) ** 2).reshape(-1, ds.L // 3, 3)
    out_dir = Path(args.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    dataio.write_ppm(out_dir / "quantized.ppm", recon)
    stats = {
        "f": f.describe(),
        "divergence": div.describe(),
        "lambda": args.lam,
        "target_k": args.target_k,
        "standardized": bool(args.standardize),
        "n_blocks": ds.n,
        "grid": list(ib.grid),
        "K": res.K,
        "compression_ratio_percent": round(compression_ratio(res.K, ds.n), 2),
        "avg_distortion": res.avg_distortion,
        "max_distortion": res.max_distortion,
        "pixel_mse": float(err.mean()),
        "converged": res.converged,
        "notes": res.notes,
    }
    if meta:
        stats["metadata"] = meta
    dump_json(stats, out_dir / "quantize.json")
    return EXIT_OK


def compression_ratio(K: int, n_blocks: int) -> float:
    """Codebook size as a percentage of the number of blocks."""
    return 100.0 * K / n_blocks


# -- parser ------------------------------------------------------------------------


def _add_divergence_flags(p):
    p.add_argument("--div", choices=["sqdist", "sqdist-avg", "alpha", "exploss", "binomial"], default="sqdist")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--binomial-n", type=int)
    p.add_argument("--tbd-c", type=float)
    p.add_argument("--dim-average", action="store_true")


def _add_f_flags(p, multi_beta=False):
    p.add_argument("--f", choices=["linear", "pow", "lse"], default="linear")
    if multi_beta:
        p.add_argument("--beta", type=float, nargs="+")
    else:
        p.add_argument("--beta", type=float)
    p.add_argument("--a", type=float, default=0.0)


def _add_data_flags(p, standardize_default):
    p.add_argument("--input", required=True)
    p.add_argument("--label")
    p.add_argument("--label-map")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=standardize_default)


def _add_solver_flags(p):
    p.add_argument("--delta", type=float)
    p.add_argument("--optimizer", choices=["auto", "weighted", "newton"], default="auto")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdpmeans", description="Generalized DP-means clustering")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="single clustering run, JSON output")
    _add_data_flags(p, standardize_default=False)
    _add_f_flags(p)
    p.add_argument("--beta-star", type=float)
    _add_divergence_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("sweep", help="lambda x beta grid averaged over shuffles, CSV output")
    _add_data_flags(p, standardize_default=True)
    _add_f_flags(p, multi_beta=True)
    p.set_defaults(f="pow")
    p.add_argument("--beta-min", type=float, default=-2.0)
    p.add_argument("--beta-max", type=float, default=5.0)
    p.add_argument("--beta-step", type=float, default=0.1)
    _add_divergence_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, nargs="+", help="explicit lambda values instead of the schedule")
    p.add_argument("--lambda-decay", type=float, default=1.01)
    p.add_argument("--shuffles", type=int)
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--k-cap-multiplier", type=float, default=3.0)
    p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("influence", help="one-dimensional influence curves and robustness labels")
    _add_f_flags(p, multi_beta=True)
    _add_divergence_flags(p)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--x-min", type=float)
    p.add_argument("--x-max", type=float)
    p.add_argument("--num", type=int)
    p.add_argument("--input", help="cluster data for analytic and empirical influence at --x-star")
    p.add_argument("--label")
    p.add_argument("--x-star", type=float, nargs="+")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("quantize", help="8x8 block vector quantization of a PPM image")
    p.add_argument("--image", required=True)
    _add_f_flags(p)
    p.add_argument("--beta-star", type=float)
    _add_divergence_flags(p)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--target-k", type=int)
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_quantize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except GDPMeansError as exc:
        code = EXIT_NUMERIC if isinstance(exc, NumericalError) else EXIT_INPUT
        sys.stderr.write(json.dumps({"error": exc.code, "type": type(exc).__name__, "message": str(exc)}) + "\n")
        return code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
