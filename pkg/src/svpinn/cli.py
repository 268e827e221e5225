"""Command-line entry point: ``svpinn {sample,train,verify,report}``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

SUMMARY_SCHEMA_VERSION = 1

_OPTIMIZERS = {"gd": "adam", "adam": "adam", "lbfgs": "lbfgs"}


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def _dimension(text: str) -> int:
    v = _positive_int(text)
    if v > 3:
        raise argparse.ArgumentTypeError("dimension must be 1, 2 or 3")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="svpinn", description=__doc__)
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="cap on BLAS/XLA worker threads (default: library defaults)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="sample Matern test functions on a grid and write them to a binary file")
    s.add_argument("--d", type=_dimension, required=True, help="spatial dimension (1-3)")
    s.add_argument("--n", type=_positive_int, required=True, help="interior grid points per axis")
    s.add_argument("--tau", type=_positive_float, default=1.0, help="field amplitude (default 1)")
    s.add_argument("--count", type=_positive_int, required=True, help="number of test functions N")
    s.add_argument("--seed", type=_seed, default=0, help="RNG seed (default 0)")
    s.add_argument("--out", required=True, help="output file")

    t = sub.add_parser("train", help="train one (method, optimizer, experiment) configuration")
    t.add_argument("--experiment", default=None, help='problem, e.g. "exp1 a=100" (default exp1)')
    t.add_argument("--method", choices=("pinn", "svpinn"), default=None, help="loss (default svpinn)")
    t.add_argument("--optimizer", choices=sorted(_OPTIMIZERS), default=None,
                   help="gd (Adam with staircase decay) or lbfgs (default lbfgs)")
    t.add_argument("--steps", type=_positive_int, default=None, help="optimizer steps (default 1000)")
    t.add_argument("--seed", type=_seed, default=None, help="initialisation seed (default 0)")
    t.add_argument("--config", default=None, help="JSON file of TrainConfig keys; flags override it")
    t.add_argument("--out-dir", required=True, help="directory for metrics.csv, checkpoint.bin, summary.json")
    t.add_argument("--grid-n", type=_positive_int, default=None, help="collocation points per axis")
    t.add_argument("--n-test", type=_positive_int, default=None, help="number of test functions N")
    t.add_argument("--tau", default=None, help='field amplitude or "balanced"')
    t.add_argument("--width", type=_positive_int, default=None, help="hidden width")
    t.add_argument("--depth", type=_positive_int, default=None, help="number of hidden layers")
    t.add_argument("--n-features", type=_positive_int, default=None, help="feature count")
    t.add_argument("--features", choices=("daff", "fourier", "identity"), default=None, help="input encoding")
    t.add_argument("--shifted-residuals", action="store_true", default=None,
                   help="evaluate residuals at i/n instead of the interior nodes")

    v = sub.add_parser("verify", help="run a verification study; exit code 1 if any check fails")
    v.add_argument("study", help="equivalence | trapezoid | eigen | estimator | regularity | comparison")
    v.add_argument("--d", type=_dimension, default=None, help="dimension (study-specific default)")
    v.add_argument("--quick", action="store_true", help="halve repetitions and sample counts")
    v.add_argument("--seed", type=_seed, default=0, help="RNG seed (default 0)")
    v.add_argument("--out-dir", default=None, help="write <study>.csv and <study>.json here")
    v.add_argument("--experiment", default="exp2 a=1", help="problem for the comparison study")
    v.add_argument("--steps", type=_positive_int, default=500, help="step budget for the comparison study")

    r = sub.add_parser("report", help="aggregate training run directories into a comparison table")
    r.add_argument("run_dirs", nargs="+", help="directories written by 'svpinn train'")
    r.add_argument("--threshold", type=_positive_float, default=1e-2,
                   help="error level for the steps-to-threshold column (default 0.01)")
    r.add_argument("--out", default=None, help="also write the table (text) and a JSON copy next to it")
    return p


def _limit_threads(n: int | None):
    if n is None:
        return None
    flags = os.environ.get("XLA_FLAGS", "")
    os.environ["XLA_FLAGS"] = f"{flags} --xla_cpu_multi_thread_eigen=false intra_op_parallelism_threads={n}".strip()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


# ---------------------------------------------------------------------------


def cmd_sample(args) -> int:
    from .sampler import sample_wm_batch
    from .spectral import GridSpec

    batch = sample_wm_batch(GridSpec(args.d, args.n), args.tau, args.count, args.seed)
    path = batch.save(args.out)
    print(json.dumps({"out": str(path), "d": args.d, "n": args.n, "N": args.count, "tau": args.tau, "seed": args.seed}))
    return 0


def _train_config(args):
    from .training import TrainConfig

    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
    experiment = data.pop("experiment", "exp1")
    if "method" in data:
        data["loss_kind"] = data.pop("method")
    if "optimizer" in data:
        data["optimizer"] = _OPTIMIZERS.get(data["optimizer"], data["optimizer"])
    flags = {
        "loss_kind": args.method, "steps": args.steps, "seed": args.seed, "grid_n": args.grid_n,
        "n_test": args.n_test, "width": args.width, "depth": args.depth, "n_features": args.n_features,
        "features": args.features, "shifted_residuals": args.shifted_residuals,
        "optimizer": None if args.optimizer is None else _OPTIMIZERS[args.optimizer],
    }
    if args.tau is not None:
        flags["tau"] = args.tau if args.tau == "balanced" else float(args.tau)
    data.update({k: v for k, v in flags.items() if v is not None})
    if args.experiment is not None:
        experiment = args.experiment
    return experiment, TrainConfig.from_dict(data)


def cmd_train(args) -> int:
    from . import __version__
    from .net import save_checkpoint
    from .problems import parse_problem
    from .training import train

    try:
        experiment, config = _train_config(args)
        problem = parse_problem(experiment)
    except (ValueError, TypeError, OSError) as exc:
        raise _UsageError(str(exc)) from exc
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = train(problem, config)
    result.metrics.to_csv(out / "metrics.csv")
    save_checkpoint(out / "checkpoint.bin", result.params, result.fmap)
    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "package_version": __version__,
        "experiment": experiment,
        "method": result.config.loss_kind,
        "optimizer": "gd" if result.config.optimizer == "adam" else "lbfgs",
        "config": result.config.to_dict(),
        "results": result.summary(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
    print(json.dumps({"out_dir": str(out), "final_l2_rel_err": result.final_l2, "steps": summary["results"]["steps"]}))
    return 0


def _json_default(obj):
    import numpy as np

    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _run_study(args):
    from . import verify

    q = args.quick
    half = (lambda v: max(1, v // 2)) if q else (lambda v: v)
    name = args.study
    if name == "equivalence":
        dims = [args.d] if args.d else [1, 2, 3]
        return [verify.study_equivalence(d, trials=half(1000), tau=tau, seed=args.seed)
                for d in dims for tau in (0.1, 1.0, 10.0)]
    if name == "trapezoid":
        return [verify.study_trapezoid(d) for d in ([args.d] if args.d else [1, 2])]
    if name == "eigen":
        return [verify.study_eigen_convergence(d) for d in ([args.d] if args.d else [1, 2])]
    if name == "estimator":
        dims = [args.d] if args.d else [1, 2]
        return [verify.study_estimator_convergence(d, reps=half(200), h_N=half({1: 2_000_000, 2: 200_000}[d]), seed=args.seed)
                for d in dims]
    if name == "regularity":
        return [verify.study_regularity(args.d or 2, draws=half(100), seed=args.seed)]
    if name == "comparison":
        return [verify.study_comparison(args.experiment, args.steps)]
    raise KeyError(name)


def cmd_verify(args) -> int:
    from .verify import STUDIES

    if args.study not in STUDIES:
        raise _UsageError(f"unknown study {args.study!r}; choose from {', '.join(STUDIES)}")
    if args.study == "comparison":
        from .problems import parse_problem

        try:
            parse_problem(args.experiment)
        except ValueError as exc:
            raise _UsageError(str(exc)) from exc
    reports = _run_study(args)
    for rep in reports:
        for line in rep.lines():
            print(line)
        if "table" in rep.summary:
            print(rep.summary["table"])
        if args.out_dir:
            rep.write(args.out_dir)
    return 0 if all(r.passed for r in reports) else 1


def cmd_report(args) -> int:
    from .training import RunMetrics
    from .verify import _mean_std

    groups: dict = {}
    for d in args.run_dirs:
        d = Path(d)
        summary_path, csv_path = d / "summary.json", d / "metrics.csv"
        if not summary_path.is_file() or not csv_path.is_file():
            raise _UsageError(f"{d} is not a run directory (summary.json and metrics.csv required)")
        summary = json.loads(summary_path.read_text())
        metrics = RunMetrics.from_csv(csv_path)
        key = (summary["experiment"], summary["method"], summary["optimizer"])
        groups.setdefault(key, []).append(
            {"final_l2": metrics.final_l2, "steps_to": metrics.steps_to(args.threshold),
             "wall_s": metrics.records[-1][5] if metrics.records else math.nan}
        )
    head = ["experiment", "method", "runs", "final L2 rel. error", f"steps to {args.threshold:g}", "time [s]"]
    lines = [" | ".join(head)]
    rows = []
    for (exp, method, opt), runs in groups.items():
        hits = [r["steps_to"] for r in runs]
        reached = [h for h in hits if h is not None]
        label = f"{'SV-PINN' if method == 'svpinn' else 'PINN'}({'L-BFGS' if opt == 'lbfgs' else 'GD'})"
        steps_cell = _mean_std(reached, "{:.1f}") if reached else "-"
        if reached and len(reached) < len(hits):
            steps_cell += f" ({len(reached)}/{len(hits)} reached)"
        cells = [exp, label, str(len(runs)), _mean_std([r["final_l2"] for r in runs], "{:.3e}"), steps_cell,
                 _mean_std([r["wall_s"] for r in runs], "{:.1f}")]
        lines.append(" | ".join(cells))
        rows.append({"experiment": exp, "method": label, "runs": runs})
    table = "\n".join(lines)
    print(table)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(table + "\n")
        out.with_suffix(".json").write_text(json.dumps({"schema_version": SUMMARY_SCHEMA_VERSION, "rows": rows},
                                                       indent=2) + "\n")
    return 0


class _UsageError(Exception):
    pass


COMMANDS = {"sample": cmd_sample, "train": cmd_train, "verify": cmd_verify, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    limiter = _limit_threads(args.threads)
    try:
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        parser.error(str(exc))
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    return 2


if __name__ == "__main__":
    sys.exit(main())
