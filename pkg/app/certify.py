"""
Variable-precision support selection that never answers wrongly, and the
finite-precision adversary.

Inputs are accessed only through readers: `read(n)` returns dyadic
approximations (y_n, A_n) with every entry within 2^-n of the exact input.
The certified selector reads increasing precisions, solves the read instance,
and answers only when the certified stability radius of the read instance
exceeds the read error. The adversary builds two dyadic instances with
different supports close enough to a well-posed center that any algorithm
reading at most k digit levels cannot tell them apart.
"""

import logging
import math
from fractions import Fraction
from typing import Callable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer

from app.condition import SigmaCertificate, certificate
from app.exceptions import (
    Delta1ViolationError,
    DimensionError,
    DomainError,
    PrecisionExceededError,
    PreconditionViolationError,
    SearchFailedError,
    UncertainSupportError,
)
from app.lasso_core import LassoInstance, SupportSet, support_from_threshold
from app.oracle1d import Instance1D, directed_support_change, stsp_1d, support_1d
from app.solver import GAP_ROUNDING_FACTOR, exact_duality_gap, solve

logger = logging.getLogger(__name__)

DEFAULT_N_MAX = 60
SAFETY_FACTOR = 1.0 - 1e-9
GAP_FLOOR_MULTIPLIER = 64.0
CERTIFY_MAX_SWEEPS = 10_000
CERTIFY_CHECK_EVERY = 10
VICTIM_MAX_SWEEPS = 2_000
VICTIM_THRESHOLD = 1e-12
EXTRA_BITS = 8


def dyadic_truncate(value, n: int) -> Fraction:
    """Round toward zero to n fractional bits."""
    if n < 0:
        raise DomainError(f"precision must be nonnegative, got {n}")
    scale = 2 ** n
    return Fraction(math.trunc(Fraction(value) * scale), scale)


def _as_fraction(value) -> Fraction:
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        raise DomainError(f"non-finite entry {value}")
    return Fraction(value) if isinstance(value, (int, Fraction)) else Fraction(float(value))


class DyadicRead(BaseModel):
    """One served approximation of an instance, entries as exact fractions."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    y: Tuple[Fraction, ...]
    A: Tuple[Tuple[Fraction, ...], ...]
    lam: Fraction
    level: Optional[int] = None

    @field_serializer("y")
    def _serialize_y(self, value):
        return [str(v) for v in value]

    @field_serializer("A")
    def _serialize_A(self, value):
        return [[str(v) for v in row] for row in value]

    @field_serializer("lam")
    def _serialize_lam(self, value):
        return str(value)

    def to_instance(self) -> LassoInstance:
        return LassoInstance(y=[float(v) for v in self.y], A=[[float(v) for v in row] for row in self.A],
                             lam=float(self.lam))

    def float_rounding(self) -> Fraction:
        """Largest |float(q) - q| over the entries; 0 when every entry is a double."""
        entries = list(self.y) + [v for row in self.A for v in row]
        return max((abs(Fraction(float(v)) - v) for v in entries), default=Fraction(0))

    def distance(self, other: "DyadicRead") -> Fraction:
        """Max-norm distance over (y, A)."""
        if len(self.y) != len(other.y) or len(self.A[0]) != len(other.A[0]):
            raise DimensionError("reads describe instances of different shapes")
        dy = max(abs(a - b) for a, b in zip(self.y, other.y))
        dA = max(abs(a - b) for ra, rb in zip(self.A, other.A) for a, b in zip(ra, rb))
        return max(dy, dA)

    def truncated(self, n: int) -> "DyadicRead":
        return DyadicRead(
            y=tuple(dyadic_truncate(v, n) for v in self.y),
            A=tuple(tuple(dyadic_truncate(v, n) for v in row) for row in self.A),
            lam=self.lam,
            level=n,
        )

    @classmethod
    def from_instance(cls, inst: LassoInstance) -> "DyadicRead":
        return cls(y=tuple(Fraction(float(v)) for v in inst.y),
                   A=tuple(tuple(Fraction(float(v)) for v in row) for row in inst.A),
                   lam=Fraction(float(inst.lam)))


def _check_delta1(served: DyadicRead, exact: DyadicRead, n: int) -> None:
    error = served.distance(exact)
    if error > Fraction(1, 2 ** n):
        raise Delta1ViolationError(f"served level {n} is {float(error):.3e} from the input, above 2^-{n}")


class DyadicReader:
    """
    Reader over an exact rational instance.

    read(n) serves the instance truncated toward zero to n fractional bits.
    With serve_exact=True the exact entries are served at every level, the
    behaviour of an exactly representable input.
    """

    def __init__(self, y, A, lam, serve_exact: bool = False):
        rows = [list(row) for row in A] if np.ndim(A) == 2 else [list(A)]
        y = list(np.atleast_1d(y)) if not isinstance(y, (list, tuple)) else list(y)
        if len(y) != len(rows) or len({len(r) for r in rows}) != 1:
            raise DimensionError(f"y has {len(y)} entries for {len(rows)} rows")
        self.exact = DyadicRead(
            y=tuple(_as_fraction(v) for v in y),
            A=tuple(tuple(_as_fraction(v) for v in row) for row in rows),
            lam=_as_fraction(lam),
        )
        if self.exact.lam <= 0:
            raise DomainError("lambda must be positive")
        self.serve_exact = serve_exact

    @classmethod
    def from_instance(cls, inst: LassoInstance, serve_exact: bool = False) -> "DyadicReader":
        read = DyadicRead.from_instance(inst)
        return cls(list(read.y), [list(r) for r in read.A], read.lam, serve_exact=serve_exact)

    @property
    def lam(self) -> Fraction:
        return self.exact.lam

    def read(self, n: int) -> DyadicRead:
        if n < 0:
            raise DomainError(f"precision must be nonnegative, got {n}")
        if self.serve_exact:
            return self.exact.model_copy(update={"level": n})
        served = self.exact.truncated(n)
        _check_delta1(served, self.exact, n)
        return served


class PrecisionCappedReader:
    """Read capability limited to digit levels n <= cap; records the deepest level read."""

    def __init__(self, source, cap: int):
        if cap < 0:
            raise DomainError(f"cap must be nonnegative, got {cap}")
        self.source = source
        self.cap = cap
        self.max_level_read: Optional[int] = None

    @property
    def lam(self) -> Fraction:
        return self.source.lam

    def read(self, n: int) -> DyadicRead:
        if n > self.cap:
            raise PrecisionExceededError(f"level {n} requested from a reader capped at {self.cap}")
        self.max_level_read = n if self.max_level_read is None else max(self.max_level_read, n)
        return self.source.read(n)


class Certified(BaseModel):
    model_config = ConfigDict(frozen=True)

    status: Literal["certified"] = "certified"
    support: SupportSet
    precision_used: int
    certificate: SigmaCertificate


class NoCertificate(BaseModel):
    model_config = ConfigDict(frozen=True)

    status: Literal["abstained"] = "abstained"
    max_precision_tried: int


SelectionOutcome = Union[Certified, NoCertificate]


def default_gap_tol(n: int) -> float:
    return 4.0 ** (-n)


def default_tau(n: int) -> float:
    return 2.0 ** (-n / 2.0)


def certify_at_precision(reader, n: int, gap_tol_rule: Callable[[int], float] = default_gap_tol,
                         tau_rule: Callable[[int], float] = default_tau,
                         max_sweeps: int = CERTIFY_MAX_SWEEPS,
                         check_every: int = CERTIFY_CHECK_EVERY) -> Optional[Certified]:
    """
    One round of the certified selector at digit level n.

    The duality gap is recomputed exactly on the rational read, and the
    certified radius must exceed 2^-n plus the float rounding of the read.
    Returns None when this level does not certify.
    """
    read = reader.read(n)
    inst = read.to_instance()
    floor = GAP_FLOOR_MULTIPLIER * GAP_ROUNDING_FACTOR * (float(inst.y @ inst.y) + 1.0)
    sol = solve(inst, max(gap_tol_rule(n), floor), max_sweeps=max_sweeps, check_every=check_every,
                raise_on_budget=False)
    if not sol.converged:
        logger.debug(f"Level {n}: solver budget exhausted")
        return None

    gap = exact_duality_gap(read.y, read.A, read.lam, sol.x)
    gap_bound = float(gap) * (1.0 + 2.0 ** -50) + 1e-300
    try:
        cert = certificate(inst, sol.model_copy(update={"gap_bound": gap_bound}), tau_rule(n))
    except UncertainSupportError as e:
        logger.debug(f"Level {n}: {e}")
        return None

    radius = SAFETY_FACTOR * cert.stsp_lb
    read_error = 2.0 ** (-n) + float(read.float_rounding())
    if read_error < radius:
        return Certified(support=cert.support_used, precision_used=n, certificate=cert)
    return None


def certified_select(reader, n_max: int = DEFAULT_N_MAX, n0: int = 1,
                     gap_tol_rule: Callable[[int], float] = default_gap_tol,
                     tau_rule: Callable[[int], float] = default_tau,
                     max_sweeps: int = CERTIFY_MAX_SWEEPS,
                     check_every: int = CERTIFY_CHECK_EVERY) -> SelectionOutcome:
    """
    Read n = n0, ..., n_max until the support of the read instance is
    certified to hold on a ball that contains the exact input.

    Returns:
        Certified with the support and the level used, or NoCertificate
    """
    if n0 < 0 or n_max < n0:
        raise DomainError(f"need 0 <= n0 <= n_max, got n0={n0}, n_max={n_max}")
    for n in range(n0, n_max + 1):
        outcome = certify_at_precision(reader, n, gap_tol_rule, tau_rule, max_sweeps, check_every)
        if outcome is not None:
            logger.info(f"Certified support {outcome.support} at precision {n}")
            return outcome
    logger.warning(f"No certificate up to precision {n_max}; abstaining")
    return NoCertificate(max_precision_tried=n_max)


def shrink_offsupport(inst: LassoInstance, W: SupportSet, delta: float) -> LassoInstance:
    """Scale the columns outside W by (1 - delta); y is unchanged."""
    if not 0 < delta < 1:
        raise DomainError(f"shrink delta must lie in (0, 1), got {delta}")
    W.check_range(inst.N)
    A = np.array(inst.A, dtype=float)
    off = W.complement(inst.N).to_zero_based()
    A[:, off] *= 1.0 - delta
    return LassoInstance(y=inst.y, A=A, lam=inst.lam)


def truncate_instance(inst: LassoInstance, n: int) -> LassoInstance:
    """Entrywise dyadic truncation of (y, A) to n fractional bits."""
    return DyadicRead.from_instance(inst).truncated(n).to_instance()


def solved_support(inst: LassoInstance, tau: float = VICTIM_THRESHOLD, gap_tol: float = 1e-14,
                   max_sweeps: int = 200_000) -> SupportSet:
    """Support of a tightly solved instance; used as ground truth when m > 1."""
    sol = solve(inst, gap_tol, max_sweeps=max_sweeps, check_every=100, raise_on_budget=False)
    return support_from_threshold(sol.x, tau)


def oracle_support(inst: LassoInstance) -> SupportSet:
    return support_1d(Instance1D.from_instance(inst))


def _max_distance(first: LassoInstance, second: LassoInstance) -> float:
    return float(max(np.max(np.abs(first.y - second.y)), np.max(np.abs(first.A - second.A))))


def _find_support_change(center: LassoInstance, radius: float, support_of: Callable, reference: SupportSet,
                         n_samples: int, seed: int) -> Optional[LassoInstance]:
    rng = np.random.default_rng(seed)
    for k in range(n_samples):
        if k % 2 == 0:
            dy = radius * rng.choice([-1.0, 1.0], size=center.y.shape)
            dA = radius * rng.choice([-1.0, 1.0], size=center.A.shape)
        else:
            dy = rng.uniform(-radius, radius, size=center.y.shape)
            dA = rng.uniform(-radius, radius, size=center.A.shape)
        probe = LassoInstance(y=center.y + dy, A=center.A + dA, lam=center.lam)
        if support_of(probe) != reference:
            return probe
    return None


class AdversaryKit(BaseModel):
    """Two dyadic instances with different supports around a well-posed center."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    center: LassoInstance
    d1: LassoInstance
    d2: LassoInstance
    witness: LassoInstance = Field(..., description="d2 before dyadic truncation")
    center_stsp: float
    inner_radius: float
    r: float
    k: int
    S1: SupportSet
    S2: SupportSet
    shrink_delta: float
    precision_bits: int
    support_of: Optional[Callable] = Field(default=None, exclude=True)

    def delta1_info(self, iota: LassoInstance, n: int) -> DyadicRead:
        """
        Digit level n served for input iota: d2 for inputs with support S1 and
        d1 for the rest while n <= k, honest truncation of iota above k.
        """
        exact = DyadicRead.from_instance(iota)
        if n > self.k:
            served = exact.truncated(n)
        else:
            source = self.d2 if self.support_of(iota) == self.S1 else self.d1
            served = DyadicRead.from_instance(source).model_copy(update={"level": n})
        _check_delta1(served, exact, n)
        return served

    def sample_inner_ball(self, n_samples: int, seed: int) -> List[LassoInstance]:
        """Uniform samples from the open max-norm ball of radius inner_radius around the center."""
        rng = np.random.default_rng(seed)
        radius = self.inner_radius * (1.0 - 1e-6)
        return [
            LassoInstance(y=self.center.y + rng.uniform(-radius, radius, size=self.center.y.shape),
                          A=self.center.A + rng.uniform(-radius, radius, size=self.center.A.shape),
                          lam=self.center.lam)
            for _ in range(n_samples)
        ]


class AdversarialReader:
    """Reader of one input iota through the kit's digit-swapping information."""

    def __init__(self, kit: AdversaryKit, iota: LassoInstance):
        self.kit = kit
        self.iota = iota

    @property
    def lam(self) -> Fraction:
        return Fraction(float(self.iota.lam))

    def read(self, n: int) -> DyadicRead:
        return self.kit.delta1_info(self.iota, n)


def build_adversary(center: LassoInstance, k: int = 12, r: Optional[float] = None,
                    support_of: Optional[Callable] = None, n_probes: int = 2000,
                    seed: int = 0) -> AdversaryKit:
    """
    Construct the adversary kit for a center whose stability support is below 2^-(k+1).

    Single-row centers use the exact oracle for supports and the stability
    support. Otherwise supports come from a tight solve, the stability support
    is bounded above by a probe that finds a support change, and the inner
    ball uses the certified lower bound.

    Raises:
        PreconditionViolationError: stsp(center) >= 2^-(k+1), or r outside (stsp, 2^-(k+1))
        SearchFailedError: no dyadic witness with a different support was found
    """
    limit = 2.0 ** (-(k + 1))
    bits = k + EXTRA_BITS
    if center.m == 1:
        support_of = support_of or oracle_support
        center_1d = Instance1D.from_instance(center)
        stsp = stsp_1d(center_1d)
        inner_radius = stsp
    else:
        support_of = support_of or solved_support
        reference = support_of(center)
        probe = _find_support_change(center, limit * (1.0 - 1e-9), support_of, reference, n_probes, seed)
        if probe is None:
            raise PreconditionViolationError(f"no support change found within 2^-{k + 1}; stsp may be too large")
        stsp = _max_distance(probe, center)
        sol = solve(center, 1e-14, raise_on_budget=False)
        inner_radius = certificate(center, sol, VICTIM_THRESHOLD).stsp_lb

    if not 0 < stsp < limit:
        raise PreconditionViolationError(f"stsp(center) = {stsp:.3e} must lie in (0, 2^-{k + 1} = {limit:.3e})")
    if r is None:
        r = 0.5 * (stsp + limit)
    if not stsp < r < limit:
        raise PreconditionViolationError(f"r = {r:.3e} must lie in ({stsp:.3e}, {limit:.3e})")

    S1 = support_of(center)
    d1 = truncate_instance(center, bits)
    if support_of(d1) != S1:
        raise SearchFailedError(f"truncating the center to {bits} bits changes its support")

    if center.m == 1:
        changed = directed_support_change(center_1d, 0.5 * (stsp + r))
        witness_base = changed.to_instance() if changed is not None else None
    else:
        witness_base = _find_support_change(center, r * (1.0 - 1e-9), support_of, S1, n_probes, seed + 1)
    if witness_base is None:
        raise SearchFailedError("no perturbation inside the r-ball changes the support")
    S2 = support_of(witness_base)

    shrink = 2.0 ** -30
    while shrink < 0.5:
        witness = shrink_offsupport(witness_base, S2, shrink) if not S2.is_empty() else witness_base
        d2 = truncate_instance(witness, bits)
        if support_of(d2) == S2 and S2 != S1 and _max_distance(d2, center) < r:
            logger.info(f"Adversary built: S1={S1}, S2={S2}, shrink delta {shrink:.3e}, r={r:.3e}")
            return AdversaryKit(
                center=center, d1=d1, d2=d2, witness=witness, center_stsp=stsp, inner_radius=inner_radius,
                r=r, k=k, S1=S1, S2=S2, shrink_delta=shrink, precision_bits=bits, support_of=support_of,
            )
        shrink *= 2.0
    raise SearchFailedError(f"no dyadic witness with support {S2} at {bits} bits inside the r-ball")


def truncate_then_solve(reader: PrecisionCappedReader) -> Optional[SupportSet]:
    """Read the deepest allowed level, solve in double precision and threshold."""
    inst = reader.read(reader.cap).to_instance()
    sol = solve(inst, 1e-12, max_sweeps=VICTIM_MAX_SWEEPS, raise_on_budget=False)
    return support_from_threshold(sol.x, VICTIM_THRESHOLD)


def capped_certified_selector(reader: PrecisionCappedReader) -> Optional[SupportSet]:
    """certified_select limited to the reader's cap; None means abstention."""
    outcome = certified_select(reader, n_max=reader.cap)
    return outcome.support if isinstance(outcome, Certified) else None


class FailureEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    true_support: SupportSet
    victim_output: Optional[SupportSet] = None
    abstained: bool
    wrong: bool
    max_level_read: Optional[int] = None


class FailureReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int
    victim: str
    entries: List[FailureEntry] = Field(default_factory=list)

    @property
    def n_wrong(self) -> int:
        return sum(e.wrong for e in self.entries)

    @property
    def n_abstained(self) -> int:
        return sum(e.abstained for e in self.entries)


def demo_failure(kit: AdversaryKit, victim: Callable, samples: Sequence[LassoInstance]) -> FailureReport:
    """Run a victim capped at k digit levels on each sample and compare with the true support."""
    entries = []
    for index, iota in enumerate(samples):
        capped = PrecisionCappedReader(AdversarialReader(kit, iota), kit.k)
        output = victim(capped)
        truth = kit.support_of(iota)
        entries.append(FailureEntry(
            index=index, true_support=truth, victim_output=output, abstained=output is None,
            wrong=output is not None and output != truth, max_level_read=capped.max_level_read,
        ))
    report = FailureReport(k=kit.k, victim=getattr(victim, "__name__", str(victim)), entries=entries)
    logger.info(f"{report.victim}: {report.n_wrong} wrong, {report.n_abstained} abstained "
                f"of {len(entries)} samples")
    return report


def digit_blindness(kit: AdversaryKit, victim: Callable, samples: Sequence[LassoInstance]) -> bool:
    """
    True when the victim answers every sample exactly as it answers the
    exactly served d2; inputs agreeing on the first k levels are indistinguishable.
    """
    reference = victim(PrecisionCappedReader(DyadicReader.from_instance(kit.d2, serve_exact=True), kit.k))
    for iota in samples:
        if victim(PrecisionCappedReader(AdversarialReader(kit, iota), kit.k)) != reference:
            return False
    return True
