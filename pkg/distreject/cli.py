import argparse
import logging
import math
import os
import sys
from typing import Callable, Dict, List, Optional

from . import __version__
from .backends import DatasetError, NeighborCountError
from .config import ConfigError, ExperimentConfig, ForestParams, RunManifest, SplitSpec, SyntheticSource, build, settings
from .data_io import DataFormatError
from .distributions import DistributionError, GaussianPredictive, from_weighted_sample
from .evaluation import convergence_study, format_table, run_lambda_sweep, run_sweep
from .scoring import crps, entropy
from .storage import FileResultStore
from .synthetic import make_model
from .utils import parse_discrete_spec, parse_gaussian_spec, parse_grid, parse_int_grid

logger = logging.getLogger(__name__)

# Arguments that never change the results and stay out of the manifest.
NOT_RECORDED = ("command", "func", "out", "jobs", "verbose")
USAGE_ERRORS = (ConfigError, DataFormatError, DatasetError, NeighborCountError, DistributionError, FileNotFoundError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _grid(text: str, flag: str, integer: bool = False) -> List[float]:
    try:
        return parse_int_grid(text) if integer else parse_grid(text)
    except ValueError as e:
        raise ConfigError(f"{flag}: {e}") from e


def _params(pairs: Optional[List[str]]) -> Dict[str, float]:
    params = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        try:
            if not sep:
                raise ValueError(pair)
            params[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--param {pair!r} must read KEY=NUMBER") from None
    return params


def _experiment(args) -> ExperimentConfig:
    """Resolve the shared sweep flags into a validated ExperimentConfig."""
    fractions = _grid(args.split, "--split")
    if len(fractions) != 3:
        raise ConfigError("--split needs labeled,unlabeled,test fractions")
    synthetic = None
    if args.synthetic is not None:
        sizes = None
        if args.sizes is not None:
            sizes = tuple(_grid(args.sizes, "--sizes", integer=True))
            if len(sizes) != 3:
                raise ConfigError("--sizes needs labeled,unlabeled,test counts")
        synthetic = build(SyntheticSource, model=args.synthetic, params=_params(args.param), n=args.n, sizes=sizes)
    forest = build(
        ForestParams,
        num_trees=args.trees,
        sample_fraction=args.sample_fraction,
        min_node_size=args.min_node_size,
        mtry=args.mtry,
    )
    return build(
        ExperimentConfig,
        data_path=args.data,
        target=args.target,
        synthetic=synthetic,
        backend=args.backend,
        k=args.k,
        k_grid=tuple(_grid(args.k_grid, "--k-grid", integer=True)),
        forest=forest,
        mtry_grid=tuple(_grid(args.mtry_grid, "--mtry-grid", integer=True)) if args.mtry_grid else None,
        standardize=args.standardize,
        epsilons=tuple(_grid(args.eps, "--eps")),
        jitter=args.jitter,
        split=build(SplitSpec, labeled_frac=fractions[0], unlabeled_frac=fractions[1], test_frac=fractions[2]),
        repetitions=args.reps,
        seed=args.seed,
    )


def _manifest(args, extra: Dict) -> RunManifest:
    recorded = {k: v for k, v in sorted(vars(args).items()) if k not in NOT_RECORDED}
    return build(
        RunManifest,
        command=args.command,
        version=__version__,
        seed=args.seed,
        config=dict(extra, args=recorded),
    )


def _save(args, name: str, frame, manifest: RunManifest):
    store = FileResultStore(args.out or settings.output_dir)
    store.save_table(name, frame, manifest)
    store.save_manifest(name, manifest)
    print(f"Results: {store.path(name + '.csv')}")
    print(f"Manifest: {store.path(name + '.json')}")


def cmd_sweep_epsilon(args) -> int:
    config = _experiment(args)
    result = run_sweep(config, jobs=args.jobs)
    print(format_table(result))
    _save(args, "sweep_epsilon", result.to_frame(), _manifest(args, {"experiment": config.model_dump(mode="json")}))
    return 0


def cmd_sweep_lambda(args) -> int:
    config = _experiment(args)
    lambdas = _grid(args.lambdas, "--lambdas")
    if any(lam < 0 for lam in lambdas):
        raise ConfigError("--lambdas must be nonnegative")
    result = run_lambda_sweep(config, lambdas, jobs=args.jobs)
    print(format_table(result))
    extra = {"experiment": config.model_dump(mode="json"), "lambdas": lambdas}
    _save(args, "sweep_lambda", result.to_frame(), _manifest(args, extra))
    return 0


def cmd_convergence(args) -> int:
    model = make_model(args.synthetic, _params(args.param))
    n_grid = _grid(args.n_grid, "--n-grid", integer=True)
    if min(n_grid) < 1:
        raise ConfigError("--n-grid must be positive")
    if not 0.0 < args.eps < 1.0:
        raise ConfigError("--eps must lie in (0, 1)")
    frame = convergence_study(
        model,
        n_grid=n_grid,
        unlabeled_size=args.unlabeled,
        epsilon=args.eps,
        repetitions=args.reps,
        seed=args.seed,
        k=args.k,
        jitter=args.jitter,
        mc_size=args.mc_size,
        oracle=args.oracle,
        jobs=args.jobs,
    )
    print(frame.to_string(index=False))
    _save(args, "convergence", frame, _manifest(args, {"n_grid": n_grid}))
    return 0


def cmd_score(args) -> int:
    if args.discrete is not None:
        try:
            values, weights = parse_discrete_spec(args.discrete)
        except ValueError as e:
            raise ConfigError(f"--discrete: {e}") from e
        dist = from_weighted_sample(values, weights)
    else:
        try:
            mean, stddev = parse_gaussian_spec(args.gaussian)
        except ValueError as e:
            raise ConfigError(f"--gaussian: {e}") from e
        dist = GaussianPredictive(mean, stddev)
    if not math.isfinite(args.y):
        raise ConfigError("--y must be finite")
    print(f"crps {crps(dist, args.y):.12g}")
    print(f"entropy {entropy(dist):.12g}")
    return 0


def cmd_replay(args) -> int:
    folder, filename = os.path.split(args.manifest)
    name, ext = os.path.splitext(filename)
    if ext != ".json":
        raise ConfigError(f"manifest {args.manifest!r} must be a .json file")
    manifest = FileResultStore(folder or os.curdir).load_manifest(name)
    handler = COMMANDS.get(manifest.command)
    if handler is None or manifest.command == "replay":
        raise ConfigError(f"manifest records an unknown command {manifest.command!r}")
    if manifest.version != __version__:
        logger.warning("manifest written by version %s, replaying with %s", manifest.version, __version__)
    if not isinstance(manifest.config.get("args"), dict):
        raise ConfigError("manifest does not record the command's arguments")
    recorded = argparse.Namespace(
        **manifest.config["args"],
        command=manifest.command,
        out=args.out,
        jobs=args.jobs,
        verbose=args.verbose,
    )
    return handler(recorded)


COMMANDS: Dict[str, Callable] = {
    "sweep-epsilon": cmd_sweep_epsilon,
    "sweep-lambda": cmd_sweep_lambda,
    "convergence": cmd_convergence,
    "score": cmd_score,
    "replay": cmd_replay,
}


def _add_common(p):
    p.add_argument("--seed", type=int, required=True, help="Base seed for all randomness")
    p.add_argument("--jobs", type=int, default=settings.jobs, help="Parallel workers")
    p.add_argument("--out", default=None, help="Output directory (default: $DR_OUTPUT_DIR or ./results)")
    p.add_argument("-v", "--verbose", action="store_true", help="Log progress")


def _add_experiment(p):
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--data", help="CSV file with a header row")
    source.add_argument("--synthetic", help="Synthetic model name (e.g. sigma-linear)")
    p.add_argument("--target", help="Target column of the CSV file")
    p.add_argument("--n", type=int, default=2000, help="Synthetic sample size")
    p.add_argument("--sizes", help="Synthetic labeled,unlabeled,test sizes (overrides --n/--split)")
    p.add_argument("--param", action="append", help="Synthetic model parameter KEY=VALUE")
    p.add_argument("--backend", choices=["knn", "forest"], default="knn")
    p.add_argument("--k", type=int, default=None, help="Neighbours (default: holdout selection)")
    p.add_argument("--k-grid", default="1,2,5,10,20,50,100", help="Candidate k values")
    p.add_argument("--trees", type=int, default=1000)
    p.add_argument("--sample-fraction", type=float, default=0.9)
    p.add_argument("--min-node-size", type=int, default=1)
    p.add_argument("--mtry", type=int, default=None, help="Features per split (default: all)")
    p.add_argument("--mtry-grid", default=None, help="Candidate mtry values for holdout selection")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None,
                   help="z-score features (default: on for knn, off for forest)")
    p.add_argument("--eps", default="0:0.9:0.1", help="Rejection rates, start:stop:step or a,b,c")
    p.add_argument("--jitter", type=float, default=1e-10, help="Entropy jitter magnitude u")
    p.add_argument("--split", default="0.5,0.2,0.3", help="labeled,unlabeled,test fractions")
    p.add_argument("--reps", type=int, default=100, help="Repetitions")
    _add_common(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="distreject", description="Distributional regression with a reject option")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    # Command: sweep-epsilon
    p = subparsers.add_parser("sweep-epsilon", help="Error and rejection rate over an epsilon grid")
    _add_experiment(p)
    p.set_defaults(func=cmd_sweep_epsilon)

    # Command: sweep-lambda
    p = subparsers.add_parser("sweep-lambda", help="Error and rejection rate over a lambda grid")
    _add_experiment(p)
    p.add_argument("--lambdas", required=True, help="Entropy thresholds, start:stop:step or a,b,c")
    p.set_defaults(func=cmd_sweep_lambda)

    # Command: convergence
    p = subparsers.add_parser("convergence", help="Median excess risk against the labeled size")
    p.add_argument("--synthetic", default="sigma-linear", help="Synthetic model name")
    p.add_argument("--param", action="append", help="Synthetic model parameter KEY=VALUE")
    p.add_argument("--n-grid", default="200,800,3200", help="Labeled sample sizes")
    p.add_argument("--unlabeled", type=int, default=1000, help="Unlabeled sample size N")
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--k", type=int, default=None, help="Neighbours (default: round(n^(2/(2+d))))")
    p.add_argument("--jitter", type=float, default=1e-10)
    p.add_argument("--mc-size", type=int, default=2000, help="Monte-Carlo draws per excess-risk estimate")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--oracle", action="store_true", help="Score the oracle predictor instead")
    _add_common(p)
    p.set_defaults(func=cmd_convergence)

    # Command: score
    p = subparsers.add_parser("score", help="CRPS and entropy of one predictive distribution")
    law = p.add_mutually_exclusive_group(required=True)
    law.add_argument("--discrete", help='Atoms "value:weight,value:weight"')
    law.add_argument("--gaussian", help='"mean,stddev"')
    p.add_argument("--y", type=float, required=True, help="Observation")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_score)

    # Command: replay
    p = subparsers.add_parser("replay", help="Re-run the command recorded in a manifest")
    p.add_argument("manifest", help="Manifest JSON written by a previous run")
    p.add_argument("--jobs", type=int, default=settings.jobs)
    p.add_argument("--out", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        print(f"distreject: error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.INFO if args.verbose else settings.log_level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except USAGE_ERRORS as e:
        print(f"distreject: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.debug("run failed", exc_info=True)
        print(f"distreject: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
