"""Command-line entry point: ``neutralgen <subcommand> [options]``.

Exit status: 0 success, 1 a checked bound failed, 2 usage or input error.
Stochastic subcommands require ``--seed`` (on the command line or in the
config file) and are byte-for-byte reproducible for a given seed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from . import analysis
from .ancestral_chain import simulate_absorption
from .block_count import (
    EXACT_LIMIT,
    absorption_distribution,
    laplace_exact,
    limit_law_laplace,
    mrca_time_pmf,
    sample_absorption_times,
    sample_limit_law,
    truncation_ks_bias,
)
from .neutral_model import (
    MAX_FLOW_STATES,
    empirical_law,
    exact_stationary,
    flow_sequence,
    population_coords,
    simulate,
    tv_distance,
)
from .rng import substream
from .tree_measure import invariant_measure_series

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "NEUTRALGEN_OUTPUT_DIR"
STOCHASTIC = {"mrca-sim", "limit-law", "simulate"}


class UsageError(Exception):
    pass


# -- output ---------------------------------------------------------------------


def _plain(v):
    """JSON/CSV-ready scalar: rationals as 'num/den', non-finite floats as strings."""
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def render(command: str, params: dict, summary: dict, records: list[dict], fmt: str) -> str:
    if fmt == "json":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "params": _plain(params),
            "summary": _plain(summary),
            "records": _plain(records),
        }
        return json.dumps(doc, indent=2, allow_nan=False) + "\n"
    buf = io.StringIO()
    if records:
        w = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: ("" if v is None else v) for k, v in _plain(r).items()})
    return buf.getvalue()


def output_path(out: str | None, command: str, fmt: str) -> Path | None:
    """--out wins; a relative --out (or the default name) lands in $NEUTRALGEN_OUTPUT_DIR when set."""
    base = os.environ.get(OUTPUT_DIR_ENV)
    if out is None:
        return Path(base) / f"{command}.{fmt}" if base else None
    p = Path(out)
    return p if p.is_absolute() or not base else Path(base) / p


def emit(args, command: str, params: dict, summary: dict, records: list[dict]) -> None:
    text = render(command, params, summary, records, args.format)
    path = output_path(args.out, command, args.format)
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _population(x) -> str:
    return ",".join(str(int(v) + 1) for v in x)


# -- subcommands -----------------------------------------------------------------


def cmd_mrca_sim(args, cfg) -> int:
    n, runs = args.n, args.runs
    T, labels = simulate_absorption(n, runs, substream(cfg.seed, 0))
    top = int(T.max()) if runs else 0
    counts = np.bincount(T, minlength=top + 1)
    exact = mrca_time_pmf(n, top, exact=n <= EXACT_LIMIT)[0]
    records = [
        {"k": k, "count": int(counts[k]), "freq": counts[k] / runs, "exact": float(exact[k])} for k in range(top + 1)
    ]
    summary = {"runs": runs, "mean_T": float(T.mean()) if runs else None}
    if n > 1 and runs:
        lab = np.bincount(labels - 1, minlength=n)
        summary["label_chi2_pvalue"] = float(stats.chisquare(lab).pvalue)
    emit(args, "mrca-sim", {"n": n, "runs": runs, "seed": cfg.seed}, summary, records)
    return 0


def cmd_absorption(args, cfg) -> int:
    i = args.i if args.i is not None else args.n
    exact = args.exact and args.n <= EXACT_LIMIT
    dist = absorption_distribution(args.n, i, eps=cfg.eps, exact=exact)
    if exact:
        pmf = dist.pmf
        surv = [dist.survival(k) for k in range(dist.horizon + 1)]
    else:
        pmf = dist.pmf_float()
        alive = dist.alive_float()
        surv = [1.0] + list(alive[:-1])
    records = [{"k": k, "pmf": pmf[k], "survival": surv[k]} for k in range(dist.horizon + 1)]
    summary = {"horizon": dist.horizon, "tail": dist.tail, "mean_truncated": dist.mean_truncated()}
    emit(args, "absorption", {"n": args.n, "i": i, "eps": cfg.eps, "exact": exact}, summary, records)
    return 0


def cmd_tail_check(args, cfg) -> int:
    report = analysis.verify_theorem1(args.n_list, cfg.eps)
    records = [
        {"N": r.n_particles, "n": r.n, "tail_T": r.tail_t, "tail_S": r.tail_s, "bound": r.bound, "ok": r.ok}
        for r in report.records
    ]
    summary = {"checked": len(records), "violations": [list(v) for v in report.violations]}
    emit(args, "tail-check", {"n_list": list(args.n_list), "eps": cfg.eps}, summary, records)
    if not report.ok:
        print(f"tail bound violated at (N, n): {report.violations}", file=sys.stderr)
        return 1
    return 0


QUANTILE_LEVELS = tuple(round(0.05 * k, 2) for k in range(1, 20))


def cmd_limit_law(args, cfg) -> int:
    n = args.n
    s_over_n = sample_absorption_times(n, args.runs, substream(cfg.seed, 0)) / n
    limit = sample_limit_law(substream(cfg.seed, 1), trunc=args.trunc, size=args.samples)
    ks = stats.ks_2samp(s_over_n, limit)
    qs = np.quantile(s_over_n, QUANTILE_LEVELS)
    ql = np.quantile(limit, QUANTILE_LEVELS)
    records = [{"level": p, "quantile_S_over_N": a, "quantile_limit": b} for p, a, b in zip(QUANTILE_LEVELS, qs, ql)]
    laplace = []
    bad = []
    for alpha in cfg.alpha_grid:
        pi = limit_law_laplace(alpha, tol=1e-10)
        bound = math.exp(alpha) * pi
        value = laplace_exact(n, n, alpha)
        laplace.append({"alpha": alpha, "pi": pi, "bound": bound, "laplace": value, "slack": bound - value})
        if value > bound + 1e-9:
            bad.append(alpha)
    summary = {
        "ks_statistic": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue),
        "truncation_ks_bias": truncation_ks_bias(args.trunc),
        "mean_S_over_N": float(s_over_n.mean()),
        "laplace": laplace,
        "laplace_violations": bad,
    }
    params = {"n": n, "runs": args.runs, "samples": args.samples, "trunc": args.trunc, "seed": cfg.seed}
    emit(args, "limit-law", params, summary, records)
    if bad:
        print(f"Laplace bound violated at alpha {bad}", file=sys.stderr)
        return 1
    return 0


def _kernel_and_eta(cfg):
    cfg.validate()
    m = cfg.load_kernel()
    return m, cfg.load_eta(m)


def cmd_simulate(args, cfg) -> int:
    m, eta = _kernel_and_eta(cfg)
    n = cfg.n_particles
    _, xi_hat = simulate(m, eta, n, args.steps, args.runs, substream(cfg.seed, 0))
    counts = empirical_law(xi_hat[:, -1, :], m.size)
    emp = counts / args.runs
    summary = {"runs": args.runs}
    exact = None
    if m.size**n <= MAX_FLOW_STATES:
        for _, hat in flow_sequence(m, eta, n, args.steps):
            pass
        exact = hat.to_float()
        summary["tv_to_exact"] = float(np.abs(emp - exact).sum())
    coords = population_coords(n, m.size)
    records = []
    for idx in range(coords.shape[0]):
        row = {"population": _population(coords[idx]), "count": int(counts[idx]), "empirical": float(emp[idx])}
        if exact is not None:
            row["exact"] = float(exact[idx])
        records.append(row)
    params = {"kernel": cfg.kernel, "eta": cfg.eta, "n": n, "steps": args.steps, "runs": args.runs, "seed": cfg.seed}
    emit(args, "simulate", params, summary, records)
    return 0


def cmd_flow(args, cfg) -> int:
    m, eta = _kernel_and_eta(cfg)
    n = cfg.n_particles
    target = exact_stationary(m, n)
    coords = population_coords(n, m.size)
    records = []
    tvs = []
    for k, (_, hat) in enumerate(flow_sequence(m, eta, n, args.steps)):
        tvs.append(tv_distance(hat, target))
        for idx in range(coords.shape[0]):
            records.append({"step": k, "population": _population(coords[idx]), "gamma_hat": hat.weights[idx]})
    summary = {"tv_to_stationary": tvs}
    emit(args, "flow", {"kernel": cfg.kernel, "eta": cfg.eta, "n": n, "steps": args.steps}, summary, records)
    return 0


def cmd_invariant(args, cfg) -> int:
    m, _ = _kernel_and_eta(cfg)
    n = cfg.n_particles
    res = invariant_measure_series(m, n, cfg.eps)
    coords = population_coords(n, m.size)
    records = [
        {"population": _population(coords[idx]), "probability": res.measure.weights[idx]}
        for idx in range(coords.shape[0])
    ]
    summary = {"radius": res.radius, "depth": res.depth, "trees": res.trees, "tail": res.tail}
    emit(args, "invariant", {"kernel": cfg.kernel, "n": n, "eps": cfg.eps}, summary, records)
    return 0


def _decay_records(report) -> list[dict]:
    return [
        {
            "n": r.n,
            "exact_tv": r.exact_tv,
            "inter_bound": r.inter_bound,
            "theo2_bound": r.theo2_bound,
            "tail_prob": r.tail_prob,
        }
        for r in report.records
    ]


def _decay_params(cfg) -> dict:
    return {
        "kernel": cfg.kernel,
        "eta": cfg.eta,
        "n": cfg.n_particles,
        "horizons": list(cfg.horizons),
        "delta": cfg.delta,
        "lambda": cfg.lam,
        "kprime": cfg.kprime,
    }


def cmd_decay(args, cfg) -> int:
    report = analysis.verify_inter_bound(cfg)
    summary = {
        "delta": report.params.delta,
        "lambda": report.params.lam,
        "decay_rate": report.decay_rate,
        "violations": report.violations,
        "notes": report.notes,
    }
    start = analysis.theo2_start(cfg.n_particles, report.params)
    if any(h >= start for h in cfg.horizons):
        summary["min_kprime"] = analysis.verify_theorem2_shape(cfg, cfg.kprime).min_kprime
    emit(args, "decay", _decay_params(cfg), summary, _decay_records(report))
    if not report.ok:
        print(f"TV bound violated at horizons {report.violations}", file=sys.stderr)
        return 1
    return 0


def cmd_lyapunov(args, cfg) -> int:
    res = analysis.lyapunov_estimate(cfg)
    summary = {"slope": res.slope, "threshold": res.threshold, "ok": res.ok, "notes": res.report.notes}
    emit(args, "lyapunov", _decay_params(cfg), summary, _decay_records(res.report))
    if not res.ok:
        print(f"decay slope {res.slope:.6g} below {res.threshold:.6g}", file=sys.stderr)
        return 1
    return 0


# -- parser ------------------------------------------------------------------------


def _int_list(text):
    try:
        return analysis.parse_int_list(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _float_list(text):
    try:
        return analysis.parse_float_list(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neutralgen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, stochastic=False):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="flat key = value file; command-line flags take precedence")
        p.add_argument("--format", choices=["csv", "json"], default=None, help="output format (default json)")
        p.add_argument("--out", help=f"output file (relative paths go under ${OUTPUT_DIR_ENV} when set)")
        if stochastic:
            p.add_argument("--seed", type=int, help="master seed (required)")
        return p

    p = add("mrca-sim", cmd_mrca_sim, "Monte Carlo of the MRCA time T and the ancestor label", stochastic=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--runs", type=int, default=10_000)

    p = add("absorption", cmd_absorption, "law of the absorption time S^(N,i) of the block-count chain")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--i", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--exact", action="store_true", help="rational output (N <= 64)")

    p = add("tail-check", cmd_tail_check, "exact tails of T and S against the exponential tail bound 3e (n/N v 1) e^-(n/N-1)+")
    p.add_argument("--n-list", type=_int_list, required=True)
    p.add_argument("--eps", type=float)

    p = add("limit-law", cmd_limit_law, "S^(N,N)/N against the limit law: KS test and Laplace bound", stochastic=True)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--runs", type=int, default=100_000)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--trunc", type=int, default=200)
    p.add_argument("--alpha-grid", type=_float_list)

    def model(p, horizons=False):
        p.add_argument("--kernel", help="mutation matrix file")
        p.add_argument("--eta", help="initial law file (default: point mass on state 1)")
        p.add_argument("--n", dest="n_particles", type=int)
        if horizons:
            p.add_argument("--horizons", type=_int_list, help="e.g. 0..40 or 0,5,10")
            p.add_argument("--delta", type=float)
            p.add_argument("--lam", type=float)
            p.add_argument("--kprime", type=float)

    p = add("simulate", cmd_simulate, "Monte Carlo of the selected population after n steps", stochastic=True)
    model(p)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--runs", type=int, default=10_000)

    p = add("flow", cmd_flow, "exact law of the selected population step by step")
    model(p)
    p.add_argument("--steps", type=int, default=10)

    p = add("invariant", cmd_invariant, "invariant measure from the genealogical-tree series")
    model(p)
    p.add_argument("--eps", type=float)

    p = add("decay", cmd_decay, "exact TV decay of the genealogy flow against the tail-mixing bound and the large-time envelope")
    model(p, horizons=True)

    p = add("lyapunov", cmd_lyapunov, "fitted decay slope against (lambda/(lambda N + 1)) ^ (1/N)")
    model(p, horizons=True)
    return parser


_CONFIG_KEYS = ("seed", "kernel", "eta", "n_particles", "horizons", "eps", "alpha_grid", "delta", "lam", "kprime")


def make_config(args) -> analysis.ExperimentConfig:
    cfg = analysis.ExperimentConfig.from_file(args.config) if args.config else analysis.ExperimentConfig()
    cli = {k: getattr(args, k) for k in _CONFIG_KEYS if getattr(args, k, None) is not None}
    cli["output_format"] = args.format
    cli["output"] = args.out
    cfg = cfg.updated(cli)
    args.format = cfg.output_format
    args.out = cfg.output
    if args.command in STOCHASTIC and cfg.seed is None:
        raise UsageError(f"{args.command} needs --seed")
    if cfg.output_format not in ("csv", "json"):
        raise UsageError("output format must be csv or json")
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = make_config(args)
        return args.func(args, cfg)
    except analysis.BoundViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ValueError, OSError) as exc:
        print(f"neutralgen {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
