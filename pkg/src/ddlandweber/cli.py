"""Command-line entry point: ``ddlandweber {train,run,verify,plot,make-dataset}``."""
import argparse
import os
import sys

import numpy as np

from .core import DivergenceError, check_adjoint
from .io import IngestionError, read_manifest, read_pgm, read_sinogram_csv, write_pgm
from .learned import TrainingSet, assemble_training_matrices, save_operator, train_pseudoinverse
from .solver import ConfigError, read_trace_csv


def _on_off(value):
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _u64(value):
    v = int(value)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _load_config(args):
    from .experiment import ExperimentConfig

    data = {}
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        data = cfg.to_dict()
    overrides = {
        "rng_seed": getattr(args, "seed", None),
        "scale": getattr(args, "scale", None),
        "output_dir": getattr(args, "output", None),
        "scheme": getattr(args, "scheme", None),
        "normalize_damping": getattr(args, "normalize_damping", None),
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def cmd_train(args):
    from .experiment import build_geometry, load_dataset, synthesize_outputs

    if args.manifest:
        pairs = []
        for inp, out in read_manifest(args.manifest):
            u = read_pgm(inp)
            if out.lower().endswith(".csv"):
                y, _ = read_sinogram_csv(out)
            else:
                y = np.load(out)
            pairs.append((u, y))
        ts = TrainingSet(pairs)
    else:
        cfg = _load_config(args)
        geom = build_geometry(cfg)
        images = load_dataset(cfg.dataset_dir, geom.image_shape, cfg.intensity_range)
        ts = synthesize_outputs(images, cfg.problem, geom)
    U, Y = assemble_training_matrices(ts)
    A = train_pseudoinverse(U, Y, args.tol, ts.input_shape, ts.output_shape, explicit=args.explicit)
    path = args.operator or os.path.join(args.output or ".", "operator.irla")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_operator(A, path)
    rank = int(np.sum(A.singular_values > A.tol * A.singular_values[0])) if A.singular_values.size else 0
    print(f"trained A: {A.shape[0]}x{A.shape[1]} from {len(ts)} pairs, rank {rank} -> {path}")
    return 0


def cmd_run(args):
    from .experiment import run_experiment

    cfg = _load_config(args)
    report = run_experiment(cfg, plots=not args.no_plots)
    for key, value in report.metrics.items():
        print(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    print(f"output written to {cfg.output_dir}")
    return 0


def cmd_verify(args):
    """Print one PASS/FAIL line per property check; nonzero exit if any fails."""
    from .experiment import build_geometry, ExperimentConfig
    from .radon import RadonTransform
    from .schlieren import schlieren_gradient_check
    from .core import MatrixOperator
    from .solver import LambdaSchedule, SolverConfig, StoppingRule, run_irl, verify_monotonicity

    cfg = _load_config(args) if args.config else ExperimentConfig(
        scale=args.scale or "desk", rng_seed=args.seed or 0)
    geom = build_geometry(cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    results = []

    R = RadonTransform(geom)
    results.append(("radon adjoint", check_adjoint(R, trials=20, seed=cfg.rng_seed), 1e-10))

    U = rng.standard_normal((40, 20))
    Y = rng.standard_normal((30, 20))
    A = train_pseudoinverse(U, Y)
    results.append(("learned adjoint", check_adjoint(A, trials=20, seed=cfg.rng_seed), 1e-10))

    worst = 0.0
    for _ in range(5):
        u = rng.standard_normal(geom.image_shape)
        h = rng.standard_normal(geom.image_shape)
        err, _ = schlieren_gradient_check(u, h, 1e-3, geom)
        worst = max(worst, err)
    results.append(("schlieren gradient", worst, 1e-8))

    # noise-free well-posed linear instance; errors must not grow
    M = rng.standard_normal((12, 8)) + 4 * np.eye(12, 8)
    F = MatrixOperator(M / np.linalg.norm(M, 2))
    truth = rng.standard_normal((8, 1))
    Aop = MatrixOperator(rng.standard_normal((12, 8)) * 0.1)
    scfg = SolverConfig("irl", 1.0, LambdaSchedule("quadratic_in_residual", 1e-7),
                        StoppingRule(2.0, 0.0, 200))
    trace = run_irl(F, Aop, F.apply(truth), scfg, truth=truth)
    mono = verify_monotonicity(trace)
    results.append(("monotonicity", 0.0 if mono.monotone else 1.0, 0.5))

    failed = 0
    for name, value, tol in results:
        ok = value <= tol
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.3e} (tolerance {tol:.0e})")
    return 1 if failed else 0


def cmd_plot(args):
    from .experiment import emit_plots
    from .solver import IterationTrace

    records, stop_reason, _ = read_trace_csv(args.trace)
    trace = IterationTrace(records, None, stop_reason, None)
    recon = np.load(args.reconstruction) if args.reconstruction else None
    out = args.output or os.path.dirname(os.path.abspath(args.trace))
    meta = emit_plots(trace, out, recon)
    for name in sorted(meta["plots"]):
        print(os.path.join(out, meta["plots"][name]["file"]))
    for name in meta["skipped"]:
        print(f"skipped {name}: series not available")
    return 0


def cmd_make_dataset(args):
    from .phantoms import ellipse_phantom, pressure_phantom

    rng = np.random.default_rng(args.seed or 0)
    os.makedirs(args.output, exist_ok=True)
    for i in range(args.count):
        if args.kind == "ellipse":
            write_pgm(os.path.join(args.output, f"img{i:03d}.pgm"), ellipse_phantom(args.size, rng))
        else:
            write_pgm(os.path.join(args.output, f"img{i:03d}.pgm"), pressure_phantom(args.size, rng), -1.0, 1.0)
    print(f"wrote {args.count} {args.size}x{args.size} images to {args.output}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ddlandweber",
                                description="Landweber-type reconstruction with a learned damping operator.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, output_help="output directory"):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=_u64, help="noise RNG seed (overrides config)")
        sp.add_argument("--scale", choices=["desk", "paper"], help="geometry preset")
        sp.add_argument("--output", help=output_help)
        sp.add_argument("--scheme", choices=["landweber", "irl", "perturbed"])
        sp.add_argument("--normalize-damping", type=_on_off, metavar="{on,off}")

    sp = sub.add_parser("train", help="fit the learned operator and serialize it")
    common(sp)
    sp.add_argument("--manifest", help="CSV of 'input.pgm,output(.csv|.npy)' pairs instead of a dataset")
    sp.add_argument("--operator", help="operator file path (default <output>/operator.irla)")
    sp.add_argument("--tol", type=float, default=1e-12, help="relative SVD truncation")
    sp.add_argument("--explicit", action="store_true", help="store A as one dense matrix")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("run", help="run one configured experiment")
    common(sp)
    sp.add_argument("--no-plots", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("verify", help="adjoint, gradient and monotonicity checks")
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("plot", help="plots from a trace CSV")
    sp.add_argument("trace")
    sp.add_argument("--reconstruction", help=".npy image for the heatmap")
    sp.add_argument("--output", help="directory (default: next to the trace)")
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("make-dataset", help="write seeded synthetic PGM images")
    sp.add_argument("--output", required=True)
    sp.add_argument("--count", type=int, default=13)
    sp.add_argument("--size", type=int, default=32)
    sp.add_argument("--seed", type=_u64)
    sp.add_argument("--kind", choices=["ellipse", "pressure"], default="ellipse")
    sp.set_defaults(func=cmd_make_dataset)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IngestionError, DivergenceError, ValueError, OSError) as exc:
        print(f"ddlandweber {args.verb}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
