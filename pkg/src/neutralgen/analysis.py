"""Bound checks and decay experiments.

Every check compares an exactly computed quantity (rational when the inputs
are rational) with the corresponding bound and records violations instead of
stopping at the first one; callers decide whether a violation is fatal.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .block_count import (
    DEFAULT_KPRIME,
    TAIL_CONSTANT,
    absorption_distribution,
    laplace_exact,
    limit_law_laplace,
    mrca_time_pmf,
    tail_bound,
)
from .neutral_model import (
    MixingParameters,
    MutationKernel,
    exact_stationary,
    fit_mixing_parameters,
    flow_sequence,
    read_matrix,
    tv_distance,
)

FLOAT_ATOL = 1e-10
LYAPUNOV_TOL = 1e-6


class BoundViolation(AssertionError):
    pass


# -- configuration ------------------------------------------------------------------


def parse_int_list(text: str) -> tuple[int, ...]:
    """'0..40', '2,5,10' or a mix such as '0..3,10'."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError(f"empty range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError(f"no integers in {text!r}")
    return tuple(out)


def parse_float_list(text: str) -> tuple[float, ...]:
    vals = tuple(float(t) for t in str(text).split(",") if t.strip())
    if not vals:
        raise ValueError(f"no numbers in {text!r}")
    return vals


def read_eta(path: str | Path) -> list[Fraction]:
    rows = read_matrix(path)
    if len(rows) != 1:
        raise ValueError(f"{path}: expected a single row of probabilities")
    return rows[0]


@dataclass
class ExperimentConfig:
    """Everything a decay/Lyapunov experiment needs; mirrors the CLI flags."""

    seed: int | None = None
    kernel: str | None = None
    eta: str | None = None
    n_particles: int = 2
    horizons: tuple[int, ...] = tuple(range(41))
    eps: float = 1e-12
    alpha_grid: tuple[float, ...] = tuple(round(0.1 * k, 1) for k in range(1, 10))
    output_format: str = "json"
    output: str | None = None
    delta: float | None = None
    lam: float | None = None
    kprime: float = DEFAULT_KPRIME

    _CONVERTERS = {
        "seed": int,
        "n_particles": int,
        "horizons": parse_int_list,
        "eps": float,
        "alpha_grid": parse_float_list,
        "delta": float,
        "lam": float,
        "kprime": float,
    }

    @classmethod
    def from_file(cls, path: str | Path) -> ExperimentConfig:
        """Flat ``key = value`` file; '#' starts a comment, dashes in keys are allowed."""
        values = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
        return cls().updated(values)

    def updated(self, values: dict) -> ExperimentConfig:
        """Copy with the given (string or typed) values; None entries are skipped."""
        known = {f.name for f in fields(self)}
        changes = {}
        for key, value in values.items():
            if key not in known:
                raise ValueError(f"unknown configuration key {key!r}")
            if value is None:
                continue
            conv = self._CONVERTERS.get(key)
            changes[key] = conv(value) if conv and isinstance(value, str) else value
        return replace(self, **changes)

    def validate(self) -> ExperimentConfig:
        if self.kernel is None:
            raise ValueError("a kernel file is required")
        for name in ("kernel", "eta"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ValueError(f"{name} file {path!r} does not exist")
        if not self.horizons:
            raise ValueError("horizons must be nonempty")
        if min(self.horizons) < 0:
            raise ValueError("horizons must be >= 0")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.output_format not in ("csv", "json"):
            raise ValueError("output format must be csv or json")
        self.load_kernel()
        self.load_eta(self.load_kernel())
        return self

    def load_kernel(self) -> MutationKernel:
        return MutationKernel.from_file(self.kernel).with_stationary()

    def load_eta(self, m: MutationKernel):
        """Initial law; defaults to the point mass on the first state."""
        if self.eta is None:
            return [Fraction(1)] + [Fraction(0)] * (m.size - 1)
        eta = read_eta(self.eta)
        if len(eta) != m.size:
            raise ValueError(f"eta has {len(eta)} entries for {m.size} states")
        return eta

    def mixing(self, m: MutationKernel) -> MixingParameters:
        if (self.delta is None) != (self.lam is None):
            raise ValueError("supply both delta and lambda or neither")
        if self.delta is not None:
            return MixingParameters(self.delta, self.lam)
        return fit_mixing_parameters(m)


# -- MRCA tail bound ------------------------------------------------------------------


@dataclass(frozen=True)
class TailRecord:
    """One (N, n) point; ``ok`` comes from exact integer comparisons, the tails are rounded."""

    n_particles: int
    n: int
    tail_t: float  # P(T >= n)
    tail_s: float  # P(S >= n) = P(T >= n - 1)
    bound: float
    ok: bool


@dataclass
class TailReport:
    records: list[TailRecord]
    eps: float

    @property
    def violations(self) -> list[tuple[int, int]]:
        return [(r.n_particles, r.n) for r in self.records if not r.ok]

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_theorem1(n_list: Sequence[int], eps: float = 1e-12, strict: bool = False) -> TailReport:
    """Exact tails of T and S = S^(N,N) against K (n/N v 1) exp(-(n/N - 1)_+), K = 3e.

    Every n with P(T >= n) >= eps is checked. Since T + 1 ~ S, the S column is
    one step heavier and is checked as well. The rational tails are compared
    with the float bound exactly (integer cross-multiplication).
    """
    records = []
    for n_particles in n_list:
        if not 1 <= n_particles <= 64:
            raise ValueError("exact tails need 1 <= N <= 64")
        if n_particles == 1:
            records.append(TailRecord(1, 0, 1.0, 1.0, tail_bound(1, 0), tail_bound(1, 0) >= 1))
            continue
        dist = absorption_distribution(n_particles, n_particles, eps=eps, exact=True)
        alive = dist.alive_float()
        n = 0
        while dist.alive_cmp(n, eps) >= 0:  # P(T >= n) = P(S > n)
            bound = tail_bound(n_particles, n)
            ok = dist.alive_cmp(n, bound) <= 0 and (n == 0 and bound >= 1 or n > 0 and dist.alive_cmp(n - 1, bound) <= 0)
            tail_s = 1.0 if n == 0 else float(alive[n - 1])
            records.append(TailRecord(n_particles, n, float(alive[n]), tail_s, bound, ok))
            n += 1
    report = TailReport(records, eps)
    if strict and not report.ok:
        raise BoundViolation(f"tail bound violated at (N, n) = {report.violations}")
    return report


# -- Laplace bound ---------------------------------------------------------------------


@dataclass(frozen=True)
class LaplaceRecord:
    n_particles: int
    alpha: float
    exact: float  # E[exp(alpha S/N)]
    bound: float  # e^alpha Pi(alpha)

    @property
    def slack(self) -> float:
        return self.bound - self.exact


def verify_laplace_bound(n_list: Sequence[int], alphas: Sequence[float], tol: float = 1e-10) -> list[LaplaceRecord]:
    out = []
    for alpha in alphas:
        bound = math.exp(alpha) * limit_law_laplace(alpha, tol=tol)
        for n in n_list:
            out.append(LaplaceRecord(n, alpha, laplace_exact(n, n, alpha), bound))
    return out


# -- decay of the flow ----------------------------------------------------------------


@dataclass(frozen=True)
class DecayRecord:
    n: int
    exact_tv: object
    inter_bound: float
    theo2_bound: float | None
    tail_prob: object  # P(T > n)


@dataclass
class DecayReport:
    records: list[DecayRecord]
    params: MixingParameters
    n_particles: int
    kprime: float | None = None
    decay_rate: float | None = None
    min_kprime: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def violations(self) -> list[int]:
        return [r.n for r in self.records if float(r.exact_tv) > r.inter_bound + FLOAT_ATOL]

    @property
    def ok(self) -> bool:
        return not self.violations


def _log(x) -> float:
    """log of a positive rational without underflow."""
    if isinstance(x, Fraction):
        return math.log(x.numerator) - math.log(x.denominator)
    return math.log(x)


def inter_bound(pmf_t: Sequence, tail: object, n: int, params: MixingParameters) -> float:
    """delta E[exp(-lambda (n - T)) 1{T <= n}] + 2 P(T > n)."""
    if params.rank_one:
        mixing = params.delta * float(pmf_t[n])
    else:
        mixing = params.delta * sum(float(pmf_t[k]) * math.exp(-params.lam * (n - k)) for k in range(n + 1))
    return mixing + 2 * float(tail)


def theo2_form(n_particles: int, n: int, params: MixingParameters, kprime: float) -> float:
    """delta K' (n/N) exp(-n/(N + 1/lambda))."""
    inv = 0.0 if params.rank_one else 1 / params.lam
    return params.delta * kprime * (n / n_particles) * math.exp(-n / (n_particles + inv))


def theo2_start(n_particles: int, params: MixingParameters) -> float:
    return n_particles + (0.0 if params.rank_one else 1 / params.lam)


def decay_report(
    m: MutationKernel,
    eta,
    n_particles: int,
    horizons: Sequence[int],
    params: MixingParameters | None = None,
    kprime: float | None = None,
) -> DecayReport:
    """Exact ||Gamma^_{eta,n} - Gamma^_mu|| against the bounds at every horizon.

    Gamma^_mu comes from the exact stationary solver, the law of T from
    block_count. theo2_bound is filled only for n >= N + 1/lambda.
    """
    if m.stationary is None:
        m = m.with_stationary()
    params = params or fit_mixing_parameters(m)
    horizons = sorted(set(int(h) for h in horizons))
    if not horizons or horizons[0] < 0:
        raise ValueError("horizons must be nonempty and >= 0")
    top = horizons[-1]
    target = exact_stationary(m, n_particles)
    pmf_t, _ = mrca_time_pmf(n_particles, top)
    tails = []
    acc = 1
    for p in pmf_t:
        acc = acc - p
        tails.append(acc)
    wanted = set(horizons)
    records = []
    start = theo2_start(n_particles, params)
    for k, (_, hat) in enumerate(flow_sequence(m, eta, n_particles, top)):
        if k not in wanted:
            continue
        tv = tv_distance(hat, target)
        t2 = theo2_form(n_particles, k, params, kprime) if kprime is not None and k >= start else None
        records.append(DecayRecord(k, tv, inter_bound(pmf_t, tails[k], k, params), t2, tails[k]))
    report = DecayReport(records, params, n_particles, kprime)
    report.decay_rate = fit_decay_rate(records, report.notes)
    return report


def fit_decay_rate(records: Sequence[DecayRecord], notes: list | None = None, window: float = 0.5) -> float | None:
    """Least-squares slope of -log TV against n over the last ``window`` of horizons.

    Horizons where TV vanishes are dropped (with a warning). If it vanishes on
    the whole window the decay is faster than any exponential and the slope is
    +inf; None when the window holds fewer than two points.
    """
    tail = list(records)[int(len(records) * (1 - window)):]
    usable = [r for r in tail if r.exact_tv > 0]
    if len(usable) < len(tail):
        msg = f"TV vanished at {len(tail) - len(usable)} horizons; window shrunk"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        if notes is not None:
            notes.append(msg)
        if not usable:
            return math.inf
    if len(usable) < 2:
        return None
    x = np.array([r.n for r in usable], dtype=float)
    y = np.array([-_log(r.exact_tv) for r in usable])
    return float(stats.linregress(x, y).slope)


def verify_inter_bound(cfg: ExperimentConfig, strict: bool = False) -> DecayReport:
    cfg.validate()
    m = cfg.load_kernel()
    report = decay_report(m, cfg.load_eta(m), cfg.n_particles, cfg.horizons, cfg.mixing(m), cfg.kprime)
    if strict and not report.ok:
        raise BoundViolation(f"TV bound violated at horizons {report.violations}")
    return report


def verify_theorem2_shape(cfg: ExperimentConfig, kprime: float = DEFAULT_KPRIME) -> DecayReport:
    """Large-time envelope delta K' (n/N) exp(-n/(N + 1/lambda)) with the given K' on horizons n >= N + 1/lambda; records the minimal valid K'."""
    cfg.validate()
    m = cfg.load_kernel()
    params = cfg.mixing(m)
    start = theo2_start(cfg.n_particles, params)
    horizons = [h for h in cfg.horizons if h >= start]
    if not horizons:
        raise ValueError(f"no horizon satisfies n >= N + 1/lambda = {start:.4g}")
    report = decay_report(m, cfg.load_eta(m), cfg.n_particles, horizons, params, kprime)
    ratios = []
    for r in report.records:
        if r.exact_tv == 0:
            ratios.append(0.0)
            continue
        unit = theo2_form(cfg.n_particles, r.n, params, 1.0)
        ratios.append(float(r.exact_tv) / unit if unit > 0 else math.inf)
    report.min_kprime = max(ratios)
    return report


# -- Lyapunov exponent ----------------------------------------------------------------------


@dataclass(frozen=True)
class LyapunovResult:
    slope: float
    threshold: float
    report: DecayReport

    @property
    def ok(self) -> bool:
        return self.slope >= self.threshold - LYAPUNOV_TOL


def lyapunov_threshold(n_particles: int, params: MixingParameters) -> float:
    """(lambda/(lambda N + 1)) ^ (1/N); the first term tends to 1/N as lambda grows."""
    first = 1 / n_particles if params.rank_one else params.lam / (params.lam * n_particles + 1)
    return min(first, 1 / n_particles)


def lyapunov_estimate(cfg: ExperimentConfig, strict: bool = False) -> LyapunovResult:
    cfg.validate()
    m = cfg.load_kernel()
    params = cfg.mixing(m)
    report = decay_report(m, cfg.load_eta(m), cfg.n_particles, cfg.horizons, params)
    if report.decay_rate is None:
        raise ValueError("not enough horizons with positive TV to fit a slope")
    res = LyapunovResult(report.decay_rate, lyapunov_threshold(cfg.n_particles, params), report)
    if strict and not res.ok:
        raise BoundViolation(f"decay slope {res.slope:.6g} below {res.threshold:.6g}")
    return res


__all__ = [
    "BoundViolation",
    "DecayRecord",
    "DecayReport",
    "ExperimentConfig",
    "LaplaceRecord",
    "LyapunovResult",
    "TAIL_CONSTANT",
    "TailRecord",
    "TailReport",
    "decay_report",
    "fit_decay_rate",
    "inter_bound",
    "lyapunov_estimate",
    "lyapunov_threshold",
    "parse_float_list",
    "parse_int_list",
    "read_eta",
    "theo2_form",
    "verify_inter_bound",
    "verify_laplace_bound",
    "verify_theorem1",
    "verify_theorem2_shape",
]
