"""Command-line interface.

Subcommands: label, label-from-affinity, theory, synth, sweep.
Exit codes: 0 success, 1 internal error, 2 input/parse error,
3 infeasible theory query. All behavior is controlled by explicit flags;
environment variables are never consulted.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import EmControls, PipelineConfig
from .errors import (AfflabelError, ConfigError, InfeasibleQueryError, ParseError,
                     StageError)
from .pipeline import run_from_affinity, run_label
from .synth import PlantedSpec, generate_planted, sweep
from .theory import (DEFAULT_MAX_PER_CLASS, bound_curve, mapping_probability_bound,
                     min_devset_size, pl_correct_class)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3


def _em_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tol", type=float, default=1e-6,
                        help="relative log-likelihood convergence tolerance")
    parser.add_argument("--max-iter", type=int, default=200, help="EM iteration cap")
    parser.add_argument("--restarts", type=int, default=5, help="EM restarts per fit")
    parser.add_argument("--var-floor", type=float, default=1e-6,
                        help="diagonal variance floor for base mixtures")
    parser.add_argument("--bernoulli-floor", type=float, default=1e-4,
                        help="clip for ensemble Bernoulli parameters")
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed")
    parser.add_argument("--workers", type=int, default=1,
                        help="process count for base-model fits")


def _config_from(args, z_top: int = 10) -> PipelineConfig:
    return PipelineConfig(
        n_classes=args.K,
        z_top=getattr(args, "Z", z_top),
        em=EmControls(tol=args.tol, max_iter=args.max_iter, restarts=args.restarts),
        var_floor=args.var_floor,
        bernoulli_floor=args.bernoulli_floor,
        seed=args.seed,
        workers=args.workers,
    )


def _print_label_summary(result, out_path) -> None:
    mapping = result.mapping
    g_text = ", ".join(f"{k}->{c}" for k, c in enumerate(mapping.g))
    print(f"labels written to {out_path}")
    print(f"cluster-to-class mapping: {g_text} (objective {mapping.objective:.6f})")


def _cmd_label(args) -> int:
    config = _config_from(args)
    result = run_label(args.manifest, args.maps, args.dev, args.out, config,
                       cache_dir=args.cache_dir, truth_path=args.truth)
    _print_label_summary(result, args.out)
    return EXIT_OK


def _cmd_label_from_affinity(args) -> int:
    config = _config_from(args)
    result = run_from_affinity(args.affinity, args.manifest, args.dev, args.out,
                               config, cache_dir=args.cache_dir, truth_path=args.truth)
    _print_label_summary(result, args.out)
    return EXIT_OK


def _write_csv(path, header: str, rows) -> None:
    lines = [header]
    lines.extend(",".join(str(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _figure_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".png")


def _cmd_theory(args) -> int:
    if (args.d is None) == (args.p is None):
        raise ConfigError("give exactly one of --d (forward query) or --p (inverse query)")
    if args.d is not None:
        pl = pl_correct_class(args.K, args.eta, args.d, literal_rho=args.literal_rho)
        bound = mapping_probability_bound(args.K, args.eta, args.d,
                                          literal_rho=args.literal_rho)
        print(f"K={args.K} eta={args.eta} d={args.d} m={args.K * args.d}")
        print(f"per-class correct-mapping bound Pl = {pl:.6f}")
        print(f"all-classes correct-mapping bound  = {bound:.6f}")
        curve_top = max(args.d, args.curve_d or 0)
    else:
        res = min_devset_size(args.K, args.eta, args.p, max_per_class=args.max_d)
        print(f"K={args.K} eta={args.eta} target confidence p={args.p}")
        print(f"smallest per-class count d* = {res.per_class}")
        print(f"development set size m* = {res.total} (bound {res.bound:.6f})")
        curve_top = max(res.per_class, args.curve_d or 0)
    if args.out:
        rows = bound_curve(args.K, args.eta, range(1, curve_top + 1),
                           literal_rho=args.literal_rho)
        _write_csv(args.out, "d,m,pl,bound",
                   [(d, m, f"{pl:.9f}", f"{b:.9f}") for d, m, pl, b in rows])
        print(f"curve written to {args.out}")
        if not args.no_plot:
            from .plots import save_theory_figure
            fig = save_theory_figure(rows, _figure_path(args.out))
            print(f"figure written to {fig}")
    return EXIT_OK


def _planted_spec_from(args) -> PlantedSpec:
    return PlantedSpec(
        n_instances=args.N,
        n_classes=args.K,
        alpha_good=args.good,
        alpha_noise=args.noise,
        separation=args.separation,
        seed=args.seed,
        family=args.family,
    )


def _cmd_synth(args) -> int:
    from .dataio import save_affinity, write_devset, write_manifest, write_truth

    spec = _planted_spec_from(args)
    inst = generate_planted(spec, dev_per_class=args.dev_per_class)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = inst.matrix.manifest
    save_affinity(inst.matrix, out / "affinity.ggam")
    write_manifest(manifest, out / "manifest.txt")
    write_devset(inst.devset, out / "dev.tsv")
    truth = {s: int(inst.labels[i]) for i, s in enumerate(manifest.instance_ids)}
    write_truth(truth, manifest.instance_ids, out / "truth.tsv")
    print(f"planted instance written to {out} "
          f"(N={spec.n_instances}, K={spec.n_classes}, alpha={spec.alpha})")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = _planted_spec_from(args)
    config = _config_from(args)
    grid = [int(x) for x in args.grid.split(",") if x.strip()]
    seeds = [int(x) for x in args.seeds.split(",") if x.strip()]
    rows = sweep(args.axis, grid, spec, config, seeds=seeds,
                 dev_per_class=args.dev_per_class)
    _write_csv(args.out, "x,accuracy,seed",
               [(f"{x:g}", f"{acc:.6f}", seed) for x, acc, seed in rows])
    print(f"sweep written to {args.out}")
    if not args.no_plot:
        from .plots import save_sweep_figure
        xlabel = ("development examples per class" if args.axis == "dev_size"
                  else "number of affinity functions")
        fig = save_sweep_figure(rows, xlabel, _figure_path(args.out))
        print(f"figure written to {fig}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afflabel",
        description="Affinity-based probabilistic labeling of unlabeled datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label", help="label a dataset from exported filter maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--maps", required=True, help="directory of .ggfm filter maps")
    p.add_argument("--dev", required=True, help="dev-set file (id<TAB>class rows)")
    p.add_argument("--out", required=True, help="label output path")
    p.add_argument("--K", type=int, required=True, help="number of classes")
    p.add_argument("--Z", type=int, default=10, help="prototypes kept per image per layer")
    p.add_argument("--cache-dir", default=None,
                   help="cache stage artifacts (affinity matrix, per-function LPs)")
    p.add_argument("--truth", default=None,
                   help="optional ground truth for a non-dev accuracy report")
    _em_flags(p)
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("label-from-affinity", help="label from a saved affinity matrix")
    p.add_argument("--affinity", required=True, help=".ggam affinity file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--K", type=int, required=True, help="number of classes")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--truth", default=None)
    _em_flags(p)
    p.set_defaults(func=_cmd_label_from_affinity)

    p = sub.add_parser("theory", help="development-set size bounds")
    p.add_argument("--K", type=int, required=True, help="number of classes")
    p.add_argument("--eta", type=float, required=True, help="assumed labeling accuracy")
    p.add_argument("--d", type=int, default=None, help="per-class dev count (forward query)")
    p.add_argument("--p", type=float, default=None,
                   help="target mapping confidence (inverse query)")
    p.add_argument("--out", default=None, help="write a (d,m,pl,bound) CSV curve here")
    p.add_argument("--curve-d", type=int, default=None,
                   help="extend the CSV curve to this per-class count")
    p.add_argument("--max-d", type=int, default=DEFAULT_MAX_PER_CLASS,
                   help="search cap for the inverse query")
    p.add_argument("--literal-rho", action="store_true",
                   help="use the non-normalizing eta/(K-1) wrong-cluster probability "
                        "(comparison only)")
    p.add_argument("--no-plot", action="store_true", help="skip the companion figure")
    p.set_defaults(func=_cmd_theory)

    def planted_flags(q):
        q.add_argument("--N", type=int, required=True, help="number of instances")
        q.add_argument("--K", type=int, required=True, help="number of classes")
        q.add_argument("--good", type=int, required=True, help="class-separating functions")
        q.add_argument("--noise", type=int, required=True, help="uninformative functions")
        q.add_argument("--separation", type=float, default=4.0,
                       help="class mean gap in noise standard deviations")
        q.add_argument("--family", choices=("gaussian", "beta"), default="gaussian")
        q.add_argument("--dev-per-class", type=int, default=5)

    p = sub.add_parser("synth", help="write a planted affinity dataset")
    planted_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("sweep", help="accuracy sweeps on planted instances")
    p.add_argument("--axis", choices=("dev_size", "num_functions"), required=True)
    p.add_argument("--grid", required=True, help="comma-separated grid values")
    p.add_argument("--seeds", default="0", help="comma-separated generator seeds")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--no-plot", action="store_true")
    planted_flags(p)
    _em_flags(p)
    p.set_defaults(func=_cmd_sweep)

    return parser


def _exit_code_for(error: Exception) -> int:
    if isinstance(error, StageError):
        return _exit_code_for(error.cause)
    if isinstance(error, InfeasibleQueryError):
        return EXIT_INFEASIBLE
    if isinstance(error, (ParseError, ConfigError)):
        return EXIT_INPUT
    return EXIT_INTERNAL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AfflabelError as e:
        print(f"afflabel: error: {e}", file=sys.stderr)
        return _exit_code_for(e)
    except Exception as e:  # internal failure
        print(f"afflabel: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def run() -> None:  # console-script entry point
    sys.exit(main())


if __name__ == "__main__":
    run()
