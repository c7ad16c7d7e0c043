"""Command-line interface: ``asmc {simulate,run,study,gcurve,oracle}``.

Every subcommand writes CSV with a header row (to ``--out``/``--trace`` or
stdout). ``--config file.json`` supplies defaults for any flag, using the
flag's long name with dashes or underscores; explicit flags win. The default
seed comes from the ``ASMC_SEED`` environment variable when it is set.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import theory
from .adaptation import TuningPopulation
from .errors import ASMCError
from .evaluation import DEFAULT_PARTICLES, standard_gaussian_curve, study
from .kernels import KernelKind
from .models import GaussianMeanTarget, MixtureTarget, dataset_spec, simulate_dataset, simulate_gaussian
from .samplers import Method, RunConfig, amcmc_run, smc_run

log = logging.getLogger("asmc")

GAUSSIAN_TARGET = "gaussian5"


def _default_seed() -> int:
    value = os.environ.get("ASMC_SEED")
    if value is None or value == "":
        return 0
    try:
        return int(value)
    except ValueError:
        raise SystemExit(f"ASMC_SEED must be an integer, got {value!r}") from None


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if np.isnan(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def write_csv(path, header, rows) -> None:
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_observations(path) -> np.ndarray:
    """One observation per line; a line may hold comma-separated coordinates."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                rows.append([float(x) for x in line.split(",")])
    arr = np.asarray(rows, dtype=float)
    return arr[:, 0] if arr.ndim == 2 and arr.shape[1] == 1 else arr


# --------------------------------------------------------------------------
# subcommands


def _load_data(args) -> tuple[np.ndarray, bool]:
    """Observations and whether they come from the Gaussian-mean model."""
    gaussian = args.target == GAUSSIAN_TARGET
    if args.data:
        return read_observations(args.data), gaussian
    if gaussian:
        data_seed = args.seed if args.data_seed is None else args.data_seed
        return simulate_gaussian(args.n, np.random.default_rng(data_seed)), True
    if args.dataset is None:
        raise SystemExit("one of --dataset, --target gaussian5 or --data is required")
    data_seed = args.dataset if args.data_seed is None else args.data_seed
    return simulate_dataset(args.dataset, args.n, np.random.default_rng(data_seed)), False


def cmd_simulate(args) -> int:
    if args.target == GAUSSIAN_TARGET:
        y = simulate_gaussian(args.n, np.random.default_rng(args.seed))
    else:
        y = simulate_dataset(args.dataset, args.n, np.random.default_rng(args.seed))
    with _open_out(args.out) as fh:
        for row in np.atleast_2d(y.T).T:
            fh.write(",".join(repr(float(v)) for v in np.atleast_1d(row)) + "\n")
    return 0


def _config_from(args, method: Method, M: int) -> RunConfig:
    return RunConfig(
        method=method,
        M=M,
        seed=args.seed,
        ess_threshold_fraction=args.ess,
        a=args.a,
        jitter_sd=args.jitter,
        resampler=args.resampler,
        force_final_move=not args.no_final_move,
        shuffle_observations=not args.no_shuffle,
        moves_per_step=args.moves_per_step,
        score_statistic=args.score_statistic,
        keep_population_snapshots=bool(getattr(args, "population_log", None)),
        amcmc_iterations=args.amcmc_iterations,
    )


def _h_bounds(args) -> dict:
    out = {}
    if args.rw_bounds:
        out[KernelKind.RANDOM_WALK] = tuple(args.rw_bounds)
    if args.lw_bounds:
        out[KernelKind.LIU_WEST] = tuple(args.lw_bounds)
    return out


def cmd_run(args) -> int:
    y, gaussian = _load_data(args)
    method = Method.parse(args.method)
    if gaussian:
        target = GaussianMeanTarget(y)
        config = _config_from(args, method, args.particles or 2000)
    else:
        r = dataset_spec(args.dataset).r if args.dataset is not None and not args.data else args.components
        config = _config_from(args, method, args.particles or DEFAULT_PARTICLES.get(r, 2000))
        if config.shuffle_observations:
            y = y[config.streams()["shuffle"].permutation(y.shape[0])]
        target = MixtureTarget(y, r)

    if method is Method.AMCMC:
        res = amcmc_run(target, config)
        header = ["h", "acc_prob_mean", "acc_rate", "jd_mean", "burn_in", "n_samples"]
        write_csv(args.trace, header,
                  [[res.h, res.acc_prob_mean, res.acc_rate, res.jd_mean, res.burn_in, res.samples.shape[0]]])
        if args.final_particles:
            write_csv(args.final_particles, [f"theta{i}" for i in range(target.dim)], res.samples.tolist())
        return 0

    trace = smc_run(target, config, _h_bounds(args))
    write_csv(args.trace, trace.columns(), trace.rows())
    if args.final_particles:
        fin = trace.final
        header = [f"theta{i}" for i in range(target.dim)] + ["log_weight"]
        write_csv(args.final_particles, header, np.column_stack([fin.particles, fin.log_weights]).tolist())
    if args.population_log:
        _write_population_log(args.population_log, trace.final_population, trace.population_snapshots)
    return 0


def _write_population_log(path, population: TuningPopulation, snapshots) -> None:
    names = population.menu.names
    rows = []
    for t, ids, h, scores in snapshots:
        for i in range(ids.shape[0]):
            rows.append([t, i, names[ids[i]], h[i], scores[i]])
    write_csv(path, ["iter", "particle", "kernel", "h", "score"], rows)


def cmd_study(args) -> int:
    methods = [Method.parse(m) for part in args.methods for m in part.split(",") if m]
    start = time.perf_counter()
    res = study(
        args.dataset, methods, runs=args.runs, seed=args.seed, M=args.particles, n=args.n,
        data_seed=args.data_seed, pool=args.pool, workers=args.workers, shuffle=not args.no_shuffle,
        moves_per_step=args.moves_per_step, jitter_sd=args.jitter, a=args.a,
    )
    log.info("study on dataset %d finished in %.1f s", args.dataset, time.perf_counter() - start)
    write_csv(args.out, res.columns(), res.rows())
    return 0


def cmd_gcurve(args) -> int:
    if args.target != GAUSSIAN_TARGET:
        raise SystemExit(f"gcurve supports --target {GAUSSIAN_TARGET} only")
    kind = KernelKind(args.kernel)
    h = np.linspace(args.hmin, args.hmax, args.steps)
    curve = standard_gaussian_curve(5, kind, h, args.n, np.random.default_rng(args.seed))
    rows = zip(curve.h, curve.g, curve.se, curve.acc)
    write_csv(args.out, ["h", "g", "se", "acc_prob_mean"], rows)
    return 0


def cmd_oracle(args) -> int:
    which = args.which
    results = []
    if which in ("prop1", "all"):
        results.append(theory.prop1_oracle(M=args.particles, seed=args.seed))
    if which in ("lemma1", "all"):
        results += theory.lemma1_oracle(M=args.particles, seed=args.seed)
    if which in ("thm1", "all"):
        results.append(theory.thm1_oracle(t=args.t, perturbation=args.perturbation))
    write_csv(args.out, ["oracle", "passed", "statistic", "threshold", "details"],
              [[r.name, int(r.passed), r.statistic, r.threshold, json.dumps(r.details, sort_keys=True)]
               for r in results])
    for r in results:
        print(r.line(), file=sys.stderr)
    return 0 if all(r.passed for r in results) else 1


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of default flag values")
    common.add_argument("--seed", type=int, default=_default_seed(), help="root seed (default: $ASMC_SEED or 0)")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--dataset", type=int, help="mixture dataset id (1-6)")
    data.add_argument("--target", choices=["mixture", GAUSSIAN_TARGET], default="mixture")
    data.add_argument("--n", type=int, default=100, help="number of observations")

    sampler = argparse.ArgumentParser(add_help=False)
    sampler.add_argument("--particles", type=int, default=None)
    sampler.add_argument("--moves-per-step", type=int, default=1)
    sampler.add_argument("--jitter", type=float, default=0.015, help="sd of the h jitter")
    sampler.add_argument("--a", type=float, default=0.0, help="offset of the linear score a + statistic")
    sampler.add_argument("--no-shuffle", action="store_true", help="keep the observation order")
    sampler.add_argument("--data-seed", type=int, default=None)

    p = argparse.ArgumentParser(prog="asmc", description="Adaptive sequential Monte Carlo samplers and experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common, data], help="simulate a dataset, one observation per line")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run", parents=[common, data, sampler], help="one sampler run; writes the trace CSV")
    r.add_argument("--method", default="Kmix", help=", ".join(m.value for m in Method))
    r.add_argument("--data", help="observation file (overrides --dataset simulation)")
    r.add_argument("--components", type=int, default=2, help="mixture components when --data is used")
    r.add_argument("--trace", default=None, help="trace CSV path (default stdout)")
    r.add_argument("--final-particles", default=None)
    r.add_argument("--population-log", default=None, help="per-particle (kernel, h, score) after each move")
    r.add_argument("--ess", type=float, default=0.5, help="resampling threshold as a fraction of M")
    r.add_argument("--resampler", choices=["residual", "multinomial"], default="residual")
    r.add_argument("--score-statistic", choices=["lambda_tilde", "lambda"], default="lambda_tilde")
    r.add_argument("--no-final-move", action="store_true")
    r.add_argument("--rw-bounds", type=float, nargs=2, metavar=("LO", "HI"))
    r.add_argument("--lw-bounds", type=float, nargs=2, metavar=("LO", "HI"))
    r.add_argument("--amcmc-iterations", type=int, default=None)
    r.set_defaults(func=cmd_run)

    st = sub.add_parser("study", parents=[common, sampler], help="replicated comparison of methods on one dataset")
    st.add_argument("--dataset", type=int, required=True)
    st.add_argument("--n", type=int, default=100)
    st.add_argument("--methods", nargs="+", default=[m.value for m in Method])
    st.add_argument("--runs", type=int, default=20)
    st.add_argument("--pool", choices=["union", "acceptance_weighted"], default="union")
    st.add_argument("--workers", type=int, default=1)
    st.add_argument("--out", default=None)
    st.set_defaults(func=cmd_study)

    g = sub.add_parser("gcurve", parents=[common], help="Monte Carlo estimate of g(h) on N(0, I5)")
    g.add_argument("--target", default=GAUSSIAN_TARGET)
    g.add_argument("--kernel", choices=["rw", "lw"], default="rw")
    g.add_argument("--hmin", type=float, default=0.05)
    g.add_argument("--hmax", type=float, default=3.0)
    g.add_argument("--steps", type=int, default=60)
    g.add_argument("--n", type=int, default=100_000)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_gcurve)

    o = sub.add_parser("oracle", parents=[common], help="checks of the large-population theory")
    o.add_argument("which", choices=["prop1", "lemma1", "thm1", "all"])
    o.add_argument("--particles", type=int, default=100_000)
    o.add_argument("--t", type=int, default=500)
    o.add_argument("--perturbation", type=float, default=0.0)
    o.add_argument("--out", default=None)
    o.set_defaults(func=cmd_oracle)

    p.set_defaults(_subparsers=sub.choices)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    with open(args.config) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise SystemExit("--config must hold a JSON object")
    subparser = args._subparsers[args.command]
    known = {a.dest for a in subparser._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            raise SystemExit(f"unknown config key {key!r} for {args.command}")
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ASMCError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
