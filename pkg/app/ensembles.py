"""
Random instance generation and Monte Carlo experiments.

Every trial draws from its own counter-based generator derived from
(master seed, trial index, stream key), so results do not depend on how
trials are scheduled across workers.
"""

import logging
import math
from typing import Annotated, Callable, Dict, List, Literal, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, WithJsonSchema, field_serializer, field_validator, model_validator
from scipy.stats import ecdf, expon, kstest
from tqdm import tqdm

from app.exceptions import DimensionError, DomainError, TieError
from app.lasso_core import LassoInstance, SupportSet, support_from_threshold
from app.oracle1d import Instance1D, delta_gap, stsp_1d, support_1d, z_epsilon, z_event
from app.solver import DEFAULT_MAX_SWEEPS, solve_with

logger = logging.getLogger(__name__)

COND_REPORT_LEVEL = 1000.0
# Right edge of the exponential-law window, as a fraction of |y|. The
# zero-boundary distance eps_Z = |y| - lambda/(2 (max a - eps_Z)) puts an atom
# just below |y| (about 0.9997 at y = 1, lambda = 0.01), so the KS distance over
# (0, 1) is about 0.135 while on (0, 0.99 |y|) it is about 0.016.
EXP_WINDOW_FRACTION = 0.99
MATRIX_SCHEMA = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}


class Distribution(BaseModel):
    """Entry law of the random design."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["exp1", "normal", "uniform01", "gaussian_rows"]
    mu: float = 1.0
    sigma2: float = Field(1e-4, gt=0)
    Sigma: Optional[Annotated[np.ndarray, WithJsonSchema(MATRIX_SCHEMA)]] = None

    @field_validator("Sigma", mode="before")
    @classmethod
    def _as_covariance(cls, value):
        if value is None:
            return None
        arr = np.array(value, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionError(f"Sigma must be square, got shape {arr.shape}")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _sigma_only_for_rows(self):
        if self.Sigma is not None and self.kind != "gaussian_rows":
            raise DomainError(f"Sigma is only meaningful for gaussian_rows, not {self.kind}")
        return self

    @field_serializer("Sigma")
    def _serialize_sigma(self, value):
        return None if value is None else value.tolist()

    @classmethod
    def exp1(cls) -> "Distribution":
        return cls(kind="exp1")

    @classmethod
    def normal(cls, mu: float = 1.0, sigma2: float = 1e-4) -> "Distribution":
        return cls(kind="normal", mu=mu, sigma2=sigma2)

    @classmethod
    def uniform01(cls) -> "Distribution":
        return cls(kind="uniform01")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def label(self) -> str:
        if self.kind == "normal":
            return f"normal({self.mu:g},{self.sigma2:g})"
        return self.kind

    def sample(self, rng: np.random.Generator, m: int, N: int) -> np.ndarray:
        if self.kind == "exp1":
            return rng.exponential(1.0, size=(m, N))
        if self.kind == "normal":
            return rng.normal(self.mu, self.sigma, size=(m, N))
        if self.kind == "uniform01":
            return rng.uniform(0.0, 1.0, size=(m, N))
        return gaussian_rows(rng, m, N, self.Sigma)


class TrialRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int
    trial: int
    N: int
    m: int
    dist: str
    cond: float
    oracle_support: SupportSet
    solver_support: SupportSet
    success: bool
    threshold: float
    converged: bool = True

    def to_row(self) -> Dict:
        row = self.model_dump()
        row["oracle_support"] = str(self.oracle_support)
        row["solver_support"] = str(self.solver_support)
        return row


class EmpiricalCDF:
    """Empirical distribution function F(t) = fraction of sample values <= t."""

    def __init__(self, values: Sequence[float]):
        values = np.sort(np.asarray(values, dtype=float).reshape(-1))
        if values.size == 0:
            raise DomainError("empirical CDF of an empty sample")
        self.values = values
        self._cdf = ecdf(values).cdf

    def __len__(self) -> int:
        return int(self.values.size)

    def __call__(self, t):
        return self._cdf.evaluate(t)


def trial_generator(seed: int, trial: int, *stream: int) -> np.random.Generator:
    """Philox generator keyed on (seed, trial, *stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial, *stream))))


def gaussian_rows(rng: np.random.Generator, m: int, N: int, Sigma: Optional[np.ndarray] = None) -> np.ndarray:
    """m x N matrix whose rows are i.i.d. N(0, Sigma); Sigma = None means the identity."""
    Z = rng.standard_normal((m, N))
    if Sigma is None:
        return Z
    if Sigma.shape != (N, N):
        raise DimensionError(f"Sigma has shape {Sigma.shape}, expected {(N, N)}")
    try:
        factor = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh(Sigma)
        if eigvals[0] < -1e-12 * max(eigvals[-1], 1.0):
            raise DomainError("Sigma is not positive semidefinite")
        factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    return Z @ factor.T


def draw_instance(dist: Distribution, N: int, m: int, seed: int, trial: int = 0,
                  y=1.0, lam: float = 1e-2, stream: Sequence[int] = ()) -> LassoInstance:
    """Random design from `dist` with the given right-hand side (scalar y is broadcast)."""
    if N < 1 or m < 1:
        raise DimensionError(f"need m, N >= 1, got m={m}, N={N}")
    A = dist.sample(trial_generator(seed, trial, *stream), m, N)
    y_vec = np.broadcast_to(np.asarray(y, dtype=float), (m,))
    return LassoInstance(y=y_vec, A=A, lam=lam)


def ks_distance(cdf: EmpiricalCDF, target: Callable, upper: Optional[float] = None) -> float:
    """
    Kolmogorov-Smirnov distance sup_t |F_hat(t) - F(t)|.

    With `upper` the supremum is restricted to t < upper: sample points below
    upper contribute both one-sided gaps, and the left limit at upper adds
    |#{x < upper}/n - F(upper)|.
    """
    if len(cdf) == 0:
        raise DomainError("KS distance of an empty sample")
    if upper is None:
        return float(kstest(cdf.values, target).statistic)

    n = len(cdf)
    below = cdf.values[cdf.values < upper]
    k = below.size
    edge = abs(k / n - float(target(upper)))
    if k == 0:
        return edge
    F = np.asarray(target(below), dtype=float)
    ranks = np.arange(1, k + 1)
    d_plus = float(np.max(ranks / n - F))
    d_minus = float(np.max(F - (ranks - 1) / n))
    return max(d_plus, d_minus, edge)


def exp_rate2_cdf(t):
    """1 - exp(-2t) for t >= 0."""
    return expon(scale=0.5).cdf(t)


def target_law(dist: Distribution) -> Callable:
    """Limit CDF of the scaled reciprocal condition for `dist`."""
    if dist.kind == "exp1":
        return exp_rate2_cdf
    if dist.kind == "normal":
        return expon(scale=dist.sigma).cdf
    if dist.kind == "uniform01":
        return expon.cdf
    raise DomainError(f"no limit law for {dist.kind}")


def reciprocal_scale(dist: Distribution, N: int) -> float:
    """Factor applied to 1/cond: 1 (exp1), 2 sqrt(2 ln N) (normal), 2N (uniform01)."""
    if dist.kind == "exp1":
        return 1.0
    if dist.kind == "normal":
        return 2.0 * math.sqrt(2.0 * math.log(N))
    if dist.kind == "uniform01":
        return 2.0 * N
    raise DomainError(f"no scaling for {dist.kind}")


def _run_trials(fn: Callable, n_trials: int, workers: int, progress: bool, desc: str) -> List:
    if workers == 1:
        return [fn(t) for t in tqdm(range(n_trials), desc=desc, disable=not progress, leave=False)]
    return Parallel(n_jobs=workers)(delayed(fn)(t) for t in range(n_trials))


def _theorem24_trial(dist: Distribution, N: int, y: float, lam: float, seed: int, trial: int) -> Dict:
    a = dist.sample(trial_generator(seed, trial, N), 1, N)[0]
    inst = Instance1D(y=y, a=a, lam=lam)
    tied = False
    try:
        support = support_1d(inst)
    except TieError:
        tied, support = True, None
    stsp = stsp_1d(inst)
    zero_boundary = False
    if support is not None and not support.is_empty() and N > 1:
        zero_boundary = z_epsilon(inst) < 0.5 * delta_gap(a).delta
    return {"trial": trial, "N": N, "stsp": stsp, "tie": tied, "zero_boundary": zero_boundary}


class Theorem24Result(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    records: pd.DataFrame
    summary: pd.DataFrame
    cdfs: Dict[int, EmpiricalCDF]


def run_theorem24(dist: Distribution, N_grid: Sequence[int], trials: int, y: float, lam: float,
                  seed: int, workers: int = 1, progress: bool = False) -> Theorem24Result:
    """
    Empirical laws of the scaled reciprocal condition of single-row instances.

    The condition is exact (stsp_1d). Per N the summary carries the KS distance
    to the limit law, the number of discarded ties and the fraction of trials
    whose stability support is set by the zero-solution boundary.
    """
    if dist.kind == "uniform01" and abs(y) <= 0.5 * lam:
        raise DomainError("the uniform ensemble needs |y| > lambda/2")
    target = target_law(dist)
    upper = EXP_WINDOW_FRACTION * abs(y) if dist.kind == "exp1" else None

    frames, rows, cdfs = [], [], {}
    for N in N_grid:
        results = _run_trials(lambda t: _theorem24_trial(dist, N, y, lam, seed, t), trials, workers,
                              progress, f"{dist.label} N={N}")
        frame = pd.DataFrame(results, columns=["trial", "N", "stsp", "tie", "zero_boundary"]).astype(
            {"tie": bool, "zero_boundary": bool})
        frame["scaled_inv_cond"] = reciprocal_scale(dist, N) * frame["stsp"]
        frames.append(frame)

        kept = frame[~frame["tie"]]
        n_ties = int(frame["tie"].sum())
        if n_ties:
            logger.warning(f"{n_ties} tied trials discarded for {dist.label}, N={N}")
        ks = math.nan
        if len(kept):
            cdfs[N] = EmpiricalCDF(kept["scaled_inv_cond"].to_numpy())
            ks = ks_distance(cdfs[N], target, upper)
        rows.append({
            "dist": dist.label, "N": N, "n_trials": trials, "n_kept": len(kept), "n_ties": n_ties,
            "ks_distance": ks,
            "zero_boundary_fraction": float(kept["zero_boundary"].mean()) if len(kept) else math.nan,
            "n_infinite_cond": int((kept["stsp"] == 0).sum()),
        })
        logger.info(f"{dist.label} N={N}: KS={ks:.4f} over {len(kept)} trials")

    columns = ["trial", "N", "stsp", "tie", "zero_boundary", "scaled_inv_cond"]
    records = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    records.insert(0, "dist", dist.label)
    return Theorem24Result(records=records, summary=pd.DataFrame(rows), cdfs=cdfs)


def _figure1_trial(dist: Distribution, dist_index: int, N: int, lam: float, seed: int, trial: int,
                   thresholds: Sequence[float], solver: str, gap_tol: float, max_sweeps: int,
                   check_every: int) -> List[TrialRecord]:
    inst = draw_instance(dist, N, 1, seed, trial, y=1.0, lam=lam, stream=(N, dist_index))
    inst_1d = Instance1D.from_instance(inst)
    try:
        oracle = support_1d(inst_1d)
    except TieError:
        logger.warning(f"Tie in trial {trial} ({dist.label}, N={N}); trial discarded")
        return []
    stsp = stsp_1d(inst_1d)
    cond = 1.0 / stsp if stsp > 0 else math.inf
    sol = solve_with(inst, backend=solver, gap_tol=gap_tol, max_sweeps=max_sweeps,
                     check_every=check_every, raise_on_budget=False)
    records = []
    for threshold in thresholds:
        found = support_from_threshold(sol.x, threshold)
        records.append(TrialRecord(
            seed=seed, trial=trial, N=N, m=1, dist=dist.label, cond=cond, oracle_support=oracle,
            solver_support=found, success=found == oracle, threshold=threshold, converged=sol.converged,
        ))
    return records


FIGURE1_SUMMARY_COLUMNS = [
    "dist", "N", "threshold", "success_rate", "n_success", "n_trials",
    "prop_cond_above_1000", "median_cond_correct", "median_cond_incorrect", "converged_fraction",
]


def summarize_figure1(trials: pd.DataFrame) -> pd.DataFrame:
    """Aggregate trial rows per (dist, N, threshold)."""
    if trials.empty:
        return pd.DataFrame(columns=FIGURE1_SUMMARY_COLUMNS)
    rows = []
    for (dist, N, threshold), group in trials.groupby(["dist", "N", "threshold"], sort=True):
        correct = group.loc[group["success"], "cond"]
        incorrect = group.loc[~group["success"], "cond"]
        rows.append({
            "dist": dist, "N": int(N), "threshold": float(threshold),
            "success_rate": float(group["success"].mean()),
            "n_success": int(group["success"].sum()),
            "n_trials": len(group),
            "prop_cond_above_1000": float((group["cond"] > COND_REPORT_LEVEL).mean()),
            "median_cond_correct": float(correct.median()) if len(correct) else math.nan,
            "median_cond_incorrect": float(incorrect.median()) if len(incorrect) else math.nan,
            "converged_fraction": float(group["converged"].mean()),
        })
    return pd.DataFrame(rows, columns=FIGURE1_SUMMARY_COLUMNS)


def run_figure1(N_grid: Sequence[int], trials: int, thresholds: Sequence[float], lam: float, seed: int,
                dists: Optional[Sequence[Distribution]] = None, solver: str = "reference",
                gap_tol: float = 1e-12, max_sweeps: int = DEFAULT_MAX_SWEEPS, check_every: int = 0,
                workers: int = 1, progress: bool = False):
    """
    Support recovery of a double-precision solver on single-row instances with y = 1.

    The solver runs with a finite sweep budget and never raises; a trial whose
    iterate did not converge is still scored.

    Returns:
        (trial_frame, summary_frame)
    """
    if dists is None:
        dists = [Distribution.exp1(), Distribution.normal(1.0, 1e-4), Distribution.uniform01()]
    records: List[TrialRecord] = []
    for dist_index, dist in enumerate(dists):
        for N in N_grid:
            batches = _run_trials(
                lambda t: _figure1_trial(dist, dist_index, N, lam, seed, t, thresholds, solver,
                                         gap_tol, max_sweeps, check_every),
                trials, workers, progress, f"figure1 {dist.label} N={N}",
            )
            for batch in batches:
                records.extend(batch)
            logger.info(f"figure1 {dist.label} N={N}: {trials} trials done")

    columns = list(TrialRecord.model_fields)
    frame = pd.DataFrame([r.to_row() for r in records], columns=columns)
    if not frame.empty:
        frame = frame.sort_values(["dist", "N", "trial", "threshold"], kind="stable").reset_index(drop=True)
    return frame, summarize_figure1(frame)


def gap_statistic_sample(dist: Distribution, N: int, trials: int, seed: int) -> np.ndarray:
    """Scaled gaps delta between the two largest |a_i|; their limit law is Exp(1)."""
    if N < 2:
        raise DimensionError("the gap statistic needs N >= 2")
    if dist.kind == "exp1":
        scale = 1.0
    elif dist.kind == "normal":
        scale = math.sqrt(2.0 * math.log(N)) / dist.sigma
    elif dist.kind == "uniform01":
        scale = float(N)
    else:
        raise DomainError(f"no gap scaling for {dist.kind}")
    out = np.empty(trials)
    for trial in range(trials):
        out[trial] = scale * delta_gap(dist.sample(trial_generator(seed, trial, N), 1, N)[0]).delta
    return out


def z_event_rate(dist: Distribution, N: int, y: float, lam: float, eps: float, trials: int, seed: int) -> float:
    """Fraction of draws for which no eps-perturbation admits the zero solution."""
    if trials <= 0:
        return math.nan
    hits = sum(
        z_event(Instance1D(y=y, a=dist.sample(trial_generator(seed, trial, N), 1, N)[0], lam=lam), eps)
        for trial in range(trials)
    )
    return hits / trials
