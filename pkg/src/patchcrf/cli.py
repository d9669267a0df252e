"""Headless batch entry points.

Every subcommand is a thin wrapper over a single library operation and writes
a config snapshot JSON next to its outputs, sufficient to rerun the command
bit-identically. Exit codes: 0 success, 1 validation error (bad flags or
inputs), 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .dataio import ManifestError, SyntheticSpec, generate_synthetic, load_dataset, write_labels
from .experiments import (
    ABLATION_EXTRA_COLUMNS,
    AblationGrid,
    SamplingStrategy,
    run_ablation_grid,
    run_benchmark,
    run_hitl,
    run_lp_experiment,
    run_refinement_experiment,
    run_zero_shot,
    write_reports_csv,
)
from .inference import EngineConfig
from .label_prop import LpConfig
from .neighborhood import build_index
from .potentials import DEFAULT_TEMPERATURE, PairwiseWeights
from .service import ServiceSettings, run_service


class _Parser(argparse.ArgumentParser):
    # unknown flags print usage and exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--k-base", type=int, default=16)
    p.add_argument("--k-ann", type=int, default=5)
    p.add_argument("--pool-factor", type=int, default=4)
    p.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iterations", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--pairwise-term", choices=("diversity", "smoothing"), default="diversity")
    p.add_argument("--no-clamp", action="store_true", help="do not clamp annotated vertices")


def _engine_config(args) -> EngineConfig:
    return EngineConfig(
        weights=PairwiseWeights(alpha=args.alpha, beta=args.beta),
        max_iterations=args.max_iterations,
        convergence_tol=args.tol,
        damping=args.damping,
        clamp_annotations=not args.no_clamp,
        temperature=args.temperature,
        pairwise_term=args.pairwise_term,
    )


def _snapshot(out_dir: Path, command: str, args) -> None:
    doc = {"command": command}
    doc.update({k: v for k, v in sorted(vars(args).items()) if k != "func"})
    (out_dir / "config_snapshot.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    out = _out_dir(args)
    spec = SyntheticSpec(
        num_classes=args.classes,
        patches_per_class=args.per_class,
        dim_unary=args.dim_unary,
        dim_pairwise=args.dim_pairwise,
        cluster_separation=args.separation,
        unary_noise=args.noise,
        seed=args.seed,
    )
    summary = generate_synthetic(spec, out, thumbnails=args.thumbnails)
    _snapshot(out, "synth", args)
    print(f"wrote {summary.manifest_path} (zero-shot accuracy {summary.zero_shot_accuracy:.4f})")
    return 0


def cmd_refine(args) -> int:
    out = _out_dir(args)
    dataset = load_dataset(args.manifest)
    config = _engine_config(args)
    index = build_index(
        dataset.pairwise,
        k_base=args.k_base,
        k_ann=args.k_ann,
        pool_factor=args.pool_factor,
        seed=args.seed,
    )
    strategy = SamplingStrategy(kind=args.strategy, budget=args.budget, seed=args.seed)
    report = run_refinement_experiment(dataset, index, config, strategy, args.seed)
    write_labels(report.predictions, out / "predictions.txt")
    write_reports_csv([report], out / "report.csv")
    _snapshot(out, "refine", args)
    print(
        f"accuracy={report.accuracy:.4f} excl_annotated={report.accuracy_excl_annotated:.4f} "
        f"iterations={report.iterations} mean_iter_s={report.mean_iter_seconds:.4f}"
    )
    return 0


def cmd_lp(args) -> int:
    out = _out_dir(args)
    dataset = load_dataset(args.manifest)
    lp_config = LpConfig(
        alpha_lp=args.alpha_lp,
        k_graph=args.k_graph,
        solver=args.solver,
        iter_tol=args.iter_tol,
        iter_max=args.iter_max,
        closed_form_max_n=args.closed_form_max_n,
    )
    strategy = SamplingStrategy(kind=args.strategy, budget=args.budget, seed=args.seed)
    report = run_lp_experiment(dataset, strategy, lp_config, args.temperature, args.seed)
    write_labels(report.predictions, out / "predictions.txt")
    write_reports_csv([report], out / "report.csv")
    _snapshot(out, "lp", args)
    print(f"accuracy={report.accuracy:.4f} iterations={report.iterations}")
    return 0


def cmd_hitl(args) -> int:
    out = _out_dir(args)
    dataset = load_dataset(args.manifest)
    config = _engine_config(args)
    index = build_index(
        dataset.pairwise,
        k_base=args.k_base,
        k_ann=args.k_ann,
        pool_factor=args.pool_factor,
        seed=args.seed,
    )
    result = run_hitl(
        dataset, index, config, per_round=args.per_round, budget=args.budget, seed=args.seed
    )
    write_labels(result.predictions, out / "predictions.txt")
    write_reports_csv([result.report], out / "report.csv")
    with open(out / "rounds.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["round", "annotations_total", "placed", "accuracy", "accuracy_excl_annotated"])
        for r in result.rounds:
            writer.writerow([r.round, r.annotations_total, r.placed, r.accuracy, r.accuracy_excl_annotated])
    _snapshot(out, "hitl", args)
    print(
        f"accuracy={result.report.accuracy:.4f} rounds={len(result.rounds)} "
        f"annotations={result.rounds[-1].annotations_total if result.rounds else 0}"
    )
    return 0


def cmd_ablate(args) -> int:
    out = _out_dir(args)
    dataset = load_dataset(args.manifest)
    grid = AblationGrid.from_dict(json.loads(Path(args.grid).read_text()))
    config = _engine_config(args)
    reports, extras = run_ablation_grid(dataset, grid, config, args.seed, pool_factor=args.pool_factor)
    write_reports_csv(reports, out / "ablation.csv", extra_columns=ABLATION_EXTRA_COLUMNS, extras=extras)
    _snapshot(out, "ablate", args)
    print(f"wrote {len(reports)} ablation rows to {out / 'ablation.csv'}")
    return 0


def cmd_zero_shot(args) -> int:
    out = _out_dir(args)
    dataset = load_dataset(args.manifest)
    report = run_zero_shot(dataset, args.temperature, args.seed)
    from .experiments import zero_shot_predictions

    write_labels(zero_shot_predictions(dataset, args.temperature), out / "predictions.txt")
    write_reports_csv([report], out / "report.csv")
    _snapshot(out, "zero-shot", args)
    print(f"accuracy={report.accuracy:.4f}")
    return 0


def cmd_serve(args) -> int:
    settings = ServiceSettings(
        host=args.host,
        port=args.port,
        max_patches=args.max_patches,
        max_sessions=args.max_sessions,
        beliefs_full_limit=args.beliefs_full_limit,
        scratch_dir=args.scratch_dir,
        ui_dir=args.ui_dir,
    )
    run_service(settings)
    return 0


def cmd_bench(args) -> int:
    result = run_benchmark(
        n=args.n,
        num_classes=args.classes,
        k_base=args.k,
        dim_pairwise=args.dim_pairwise,
        iterations=args.iterations,
        seed=args.seed,
    )
    print(f"index build: {result['index_build_seconds']:.3f} s (one-time)")
    for i, s in enumerate(result["seconds_per_iteration"]):
        print(f"iteration {i}: {s:.4f} s")
    print(
        f"seconds/iteration: mean={result['mean_seconds_per_iteration']:.4f} "
        f"max={result['max_seconds_per_iteration']:.4f}"
    )
    if args.out:
        out = _out_dir(args)
        (out / "bench.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
        _snapshot(out, "bench", args)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="patchcrf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--dim-unary", type=int, default=512)
    p.add_argument("--dim-pairwise", type=int, default=256)
    p.add_argument("--separation", type=float, default=0.1)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--thumbnails", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("refine", help="run refinement on a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", choices=("none", "random", "error_based"), default="none")
    p.add_argument("--budget", type=int, default=0)
    _add_engine_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("lp", help="run the label propagation baseline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", choices=("random", "error_based"), default="random")
    p.add_argument("--budget", type=int, default=10)
    p.add_argument("--alpha-lp", type=float, default=0.5)
    p.add_argument("--k-graph", type=int, default=16)
    p.add_argument("--solver", choices=("closed_form", "iterative"), default="closed_form")
    p.add_argument("--iter-tol", type=float, default=1e-8)
    p.add_argument("--iter-max", type=int, default=1000)
    p.add_argument("--closed-form-max-n", type=int, default=4000)
    p.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_lp)

    p = sub.add_parser("hitl", help="oracle-in-the-loop refinement")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-round", type=int, default=5)
    p.add_argument("--budget", type=int, default=100)
    _add_engine_flags(p)
    p.set_defaults(func=cmd_hitl)

    p = sub.add_parser("ablate", help="run an ablation grid from a JSON grid file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    _add_engine_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("zero-shot", help="zero-shot predictions only")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_zero_shot)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-patches", type=int, default=100_000)
    p.add_argument("--max-sessions", type=int, default=16)
    p.add_argument("--beliefs-full-limit", type=int, default=50_000)
    p.add_argument("--scratch-dir", default=None)
    p.add_argument("--ui-dir", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="time message-passing iterations")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--dim-pairwise", type=int, default=64)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (ValueError, ManifestError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as e:  # runtime failure
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
