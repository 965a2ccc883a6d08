"""Command-line entry points.

Subcommands:

* ``synthesize``  run the forward model and write the synthetic core
* ``infer``       sample the posterior against an observed core
* ``surface``     evaluate the log-likelihood on a 2-D parameter grid
* ``psrf``        compute convergence diagnostics from saved trace files
Exit codes: 0 success, 2 invalid configuration or input, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import diagnostics, samplers
from .observation import CategoryMismatch
from .ode import NonFiniteState, StepUnderflow
from .parameters import AdaptiveWalk, ConstrainedWalk
from .runconfig import ConfigError, RunConfig, load_config

__all__ = ["main", "IncompatibleTraces"]

TRACE_FIXED_COLUMNS = ("iteration", "replica", "log_likelihood", "log_prior", "accepted")


class IncompatibleTraces(Exception):
    """Trace files do not share a parameter set."""


def _fmt(x: float) -> str:
    return "%.9g" % x


def _write_trace(
    path: str, runs: list[samplers.SampleRun], names: list[str], mask: np.ndarray
) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,replica,log_likelihood,log_prior,accepted,"
                 + ",".join(names) + "\n")
        n = len(runs[0].iterates)
        for i in range(n):
            for r, run in enumerate(runs):
                row = [str(i), str(r), _fmt(run.logliks[i]), _fmt(run.logpriors[i]),
                       str(int(run.accepted[i]))]
                row += [_fmt(v) for v in run.iterates[i][mask]]
                fh.write(",".join(row) + "\n")


def _make_proposal_factory(config: RunConfig):
    def factory():
        if config.adaptive:
            return AdaptiveWalk(
                config.space,
                config.steps,
                adapt_start=config.adapt_start,
                update_interval=config.adapt_interval,
            )
        return ConstrainedWalk(config.space, config.steps)

    return factory


def _free_view(run: samplers.SampleRun, config: RunConfig) -> np.ndarray:
    return run.posterior[:, config.space.free_mask()]


def cmd_synthesize(config: RunConfig, out: str, args) -> int:
    target = config.posterior()
    t0 = time.perf_counter()
    core = target.predict(config.base_theta())
    elapsed = time.perf_counter() - t0
    core.write_proportions_csv(os.path.join(out, "proportions.csv"))
    core.write_time_labels_csv(os.path.join(out, "time_labels.csv"))
    core.write_depth_labels_csv(os.path.join(out, "depth_labels.csv"))
    with open(os.path.join(out, "provenance.ini"), "w") as fh:
        fh.write(config.to_ini())
    total = float(np.sum(core.layer_thickness))
    print(f"synthesized {len(core.times)} layers, {total:.3f} m of core "
          f"in {elapsed:.3f} s")
    print(f"wrote proportions.csv, time_labels.csv, depth_labels.csv, "
          f"provenance.ini to {out}")
    return 0


def cmd_infer(config: RunConfig, out: str, args) -> int:
    if not config.space.free:
        raise ConfigError("[inference] free: at least one free parameter is required")
    obs = config.load_observed()
    target = config.posterior(obs)
    rng = np.random.default_rng(config.seed)
    factory = _make_proposal_factory(config)
    names = list(config.space.free_names())
    t0 = time.perf_counter()
    if config.method == "pt":
        ladder = samplers.TemperatureLadder.geometric(
            config.replicas, beta_max=config.beta_max
        )
        pt = samplers.run_parallel_tempering(
            target,
            lambda _beta: factory(),
            ladder,
            config.samples,
            rng,
            burn_in=config.burn_in,
            budget=config.budget,
            n_workers=1 if args.sequential else min(config.replicas, os.cpu_count() or 1),
        )
        runs = pt.replicas
        cold = pt.cold
        swap_note = " swap rates " + " ".join(_fmt(r) for r in pt.swap_rates)
    else:
        cold = samplers.run_single_chain(
            target, factory(), config.samples, rng, burn_in=config.burn_in
        )
        runs = [cold]
        swap_note = ""
    elapsed = time.perf_counter() - t0

    _write_trace(os.path.join(out, "trace.csv"), runs, names, config.space.free_mask())
    post_free = _free_view(cold, config)
    summary = diagnostics.summarize(
        post_free, names, cold.acceptance_rate, mc_fn=None
    )
    mc = _posterior_mean_misclassification(target, post_free, config)
    payload = summary.as_dict()
    payload.update(
        {
            "method": config.method,
            "runtime_s": elapsed,
            "posterior_mean_misclassification": mc,
            "log_likelihood_max": float(np.max(cold.logliks)),
        }
    )
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    env = diagnostics.prediction_envelope(
        post_free_to_full(post_free, config),
        target.predict_labels,
        config.categories(),
    )
    env.write_csv(os.path.join(out, "envelope.csv"))
    known = obs.known
    coverage = float(np.mean(env.contains(obs.labels)[known])) if known.any() else float("nan")

    with open(os.path.join(out, "provenance.ini"), "w") as fh:
        fh.write(config.to_ini())

    print(f"{config.method} run: {config.samples} samples in {elapsed:.1f} s,"
          f" acceptance rate {cold.acceptance_rate:.3f}{swap_note}")
    print(f"posterior mean misclassification {mc:.2f} bins,"
          f" envelope coverage {coverage:.3f}")
    print(f"wrote trace.csv, summary.json, envelope.csv, provenance.ini to {out}")
    return 0


def post_free_to_full(post_free: np.ndarray, config: RunConfig) -> np.ndarray:
    """Expand free-coordinate rows back to full parameter vectors."""
    base = config.base_theta()
    full = np.tile(base, (len(post_free), 1))
    full[:, config.space.free_mask()] = post_free
    return full


def _posterior_mean_misclassification(target, post_free, config, limit: int = 200) -> float:
    full = post_free_to_full(post_free, config)
    if len(full) > limit:
        idx = np.linspace(0, len(full) - 1, limit).astype(int)
        full = full[idx]
    scores = []
    for theta in full:
        try:
            scores.append(target.misclassification(theta))
        except (StepUnderflow, NonFiniteState, ValueError):
            continue
    return float(np.mean(scores)) if scores else float("nan")


def cmd_surface(config: RunConfig, out: str, args) -> int:
    obs = config.load_observed()
    target = config.posterior(obs)
    space = config.space
    names = space.names()
    for label in (args.param_a, args.param_b):
        if label not in names:
            raise ConfigError(f"--param: {label!r} is not a parameter "
                              f"(choose from the flat coordinate names)")
    ia, ib = names.index(args.param_a), names.index(args.param_b)
    lower, upper = space.lower(), space.upper()
    lo_a = args.min_a if args.min_a is not None else lower[ia]
    hi_a = args.max_a if args.max_a is not None else upper[ia]
    lo_b = args.min_b if args.min_b is not None else lower[ib]
    hi_b = args.max_b if args.max_b is not None else upper[ib]
    values_a = np.linspace(lo_a, hi_a, args.resolution)
    values_b = np.linspace(lo_b, hi_b, args.resolution)
    t0 = time.perf_counter()
    grid = diagnostics.likelihood_surface(
        space,
        target.log_likelihood,
        config.base_theta(),
        args.param_a,
        values_a,
        args.param_b,
        values_b,
        workers=1 if args.sequential else (os.cpu_count() or 1),
    )
    elapsed = time.perf_counter() - t0
    grid.write_csv(os.path.join(out, "surface.csv"))
    finite = np.isfinite(grid.loglik)
    print(f"surface {args.resolution}x{args.resolution} over "
          f"{args.param_a} x {args.param_b} in {elapsed:.1f} s; "
          f"{int(finite.sum())} finite nodes, max {_fmt(np.max(grid.loglik[finite]))}"
          if finite.any() else "surface evaluated: no finite nodes")
    print(f"wrote surface.csv to {out}")
    return 0


def _read_trace(path: str) -> tuple[list[str], np.ndarray]:
    """Cold-chain (replica 0) parameter iterates from one trace CSV."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"trace file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[: len(TRACE_FIXED_COLUMNS)]) != TRACE_FIXED_COLUMNS:
            raise IncompatibleTraces(f"{path}: not a trace file (unexpected header)")
        names = header[len(TRACE_FIXED_COLUMNS) :]
        if not names:
            raise IncompatibleTraces(f"{path}: trace has no parameter columns")
        rows = [
            [float(v) for v in row[len(TRACE_FIXED_COLUMNS) :]]
            for row in reader
            if row and row[1] == "0"
        ]
    if not rows:
        raise IncompatibleTraces(f"{path}: no replica-0 rows")
    return names, np.asarray(rows)


def cmd_psrf(config: RunConfig, out: str, args) -> int:
    if len(args.traces) < 2:
        raise IncompatibleTraces("need at least two trace files to estimate spread")
    names, first = _read_trace(args.traces[0])
    chains = [first]
    for path in args.traces[1:]:
        other_names, iterates = _read_trace(path)
        if other_names != names:
            raise IncompatibleTraces(
                f"{path}: parameters {other_names} do not match {names}"
            )
        chains.append(iterates)
    n = min(len(c) for c in chains)
    burn = int(round(args.burn_in * n))
    chains = [c[burn:n] for c in chains]
    table = diagnostics.psrf_table(chains)
    payload = {name: float(r) for name, r in zip(names, table)}
    with open(os.path.join(out, "psrf.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{len(chains)} traces, {n - burn} post-burn-in iterations each")
    width = max(len(n) for n in names)
    for name, r in zip(names, table):
        flag = "" if r < 1.1 else "  <-- not converged"
        print(f"  {name:<{width}}  R = {r:.4f}{flag}")
    print(f"wrote psrf.json to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reefinvert",
        description="Simulate reef cores and invert them for growth thresholds.",
    )
    parser.add_argument("--config", metavar="PATH", default=None,
                        help="INI run configuration (defaults used when omitted)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the configured random seed")
    parser.add_argument("--out", metavar="DIR", default=".",
                        help="output directory (created if missing)")
    parser.add_argument("--sequential", action="store_true",
                        help="disable worker parallelism")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synthesize", help="run the forward model at the configured values")
    sub.add_parser("infer", help="sample the posterior against the observed core")

    surf = sub.add_parser("surface", help="grid the log-likelihood over two parameters")
    surf.add_argument("--param-a", default="epsilon")
    surf.add_argument("--param-b", default="alpha_s")
    surf.add_argument("--resolution", type=int, default=50)
    surf.add_argument("--min-a", type=float, default=None)
    surf.add_argument("--max-a", type=float, default=None)
    surf.add_argument("--min-b", type=float, default=None)
    surf.add_argument("--max-b", type=float, default=None)

    psrf = sub.add_parser("psrf", help="convergence diagnostics from saved traces")
    psrf.add_argument("traces", nargs="+", metavar="TRACE_CSV",
                      help="trace files from independent runs (two or more)")
    psrf.add_argument("--burn-in", type=float, default=0.15,
                      help="fraction of each trace to discard (default 0.15)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        os.makedirs(args.out, exist_ok=True)
        handler = {
            "synthesize": cmd_synthesize,
            "infer": cmd_infer,
            "surface": cmd_surface,
            "psrf": cmd_psrf,
        }[args.command]
        return handler(config, args.out, args)
    except (ConfigError, FileNotFoundError, CategoryMismatch, IncompatibleTraces) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except samplers.AllProposalsInvalid as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        print("hint: every prior draw produced an invalid forward run; check that "
              "the observed core's structure, bin size, and span match the "
              "simulation settings", file=sys.stderr)
        return 1
    except (StepUnderflow, NonFiniteState, diagnostics.DegenerateChains) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
