"""lp frequency-moment estimation via randomized-boundary level sets.

Frequencies up to a cutoff k are counted exactly-by-frequency (low-frequency
block); higher frequencies are covered by geometric intervals
I_q = (beta(1+eta)^q, beta(1+eta)^(q+1)] whose populations are estimated from
per-level heavy-hitter reports, taking the deepest subsampling level with
enough reported mass.  The randomized base beta keeps true frequencies away
from interval boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .budget import MechanismBudget
from .heavy_hitters import REEVAL_SUBSTREAM, HHConfig, HHSketch
from .low_freq import LowFreqSmall, subsample_lowfreq_params
from .randomness import (
    GeometricLevelHash,
    NoiseContext,
    even_independence,
    median_boost,
)
from .streams import EMPTY_EVENT, FrequencyTable, StreamEvent
from .distinct import BoostedEstimator

BELOW = "below"
ABOVE = "above"

_HASH_RANGE_CAP = 1 << 60


def beta_sample(ctx: NoiseContext, eta: float, T: int, C: int = 3) -> float:
    """Randomized interval base: uniform on a ((eta/T)^C)-grid of [1/2, 1].

    Deterministic convention 3/4 under noise-off.
    """
    if C < 2:
        raise ValueError(f"grid exponent C must be >= 2, got {C}")
    if ctx.noise_off:
        return 0.75
    step = (eta / T) ** C
    raw = 0.5 + 0.5 * ctx.uniform()
    beta = 0.5 + round((raw - 0.5) / step) * step
    return min(max(beta, 0.5), 1.0)


@dataclass(frozen=True)
class MomentConfig:
    """Parameter block of the level-set estimator.

    ``tau`` is the heavy-hitter recall threshold splitting low from high
    frequencies; None derives it from the heavy-hitter backend's candidacy
    floor, capped so the low-frequency block keeps at most
    ``max_low_freq_k`` counters.
    """

    p: float
    epsilon: float
    eta: float
    xi: float
    T: int
    n: int
    copies: int | None = None  # None: ceil(50 ln(3T/xi))
    tau: float | None = None
    beta_grid_exponent: int = 3
    max_low_freq_k: int = 64
    inner_buckets: int = 8
    # larger noise-floor factor than the standalone heavy hitters: interval
    # populations are count-weighted by boundary^p, so one noise-inflated
    # candidate is far costlier here than a spurious report there
    gamma2_factor: float = 0.2
    small_universe_limit: int = 1 << 14
    clamp_low_freq: bool = True

    def __post_init__(self) -> None:
        if self.p < 0:
            raise ValueError(f"p must be >= 0, got {self.p}")
        if not 0 < self.eta < 0.5:
            raise ValueError(f"eta must be in (0, 0.5), got {self.eta}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    def n_copies(self) -> int:
        if self.copies is not None:
            return self.copies
        return math.ceil(50 * math.log(3 * self.T / self.xi))


@dataclass(frozen=True)
class LevelSetShape:
    """Derived interval structure for one estimator copy."""

    beta: float
    tau: float
    q1: int
    q2: int
    k: int
    L: int
    lam: int
    B: float
    qualify_floor: float  # 8*lam/eta^2


def _geometric_boundary(beta: float, eta: float, q: int) -> float:
    return beta * (1.0 + eta) ** q


def build_shape(cfg: MomentConfig, beta: float, tau: float) -> LevelSetShape:
    eta, T = cfg.eta, cfg.T
    tau = max(1.0, min(tau, float(cfg.max_low_freq_k)))
    # smallest q with beta(1+eta)^q > tau; floating start, then exact fix-up
    q1 = math.floor(math.log(tau / beta) / math.log1p(eta)) + 1
    while _geometric_boundary(beta, eta, q1) <= tau:
        q1 += 1
    while _geometric_boundary(beta, eta, q1 - 1) > tau:
        q1 -= 1
    # smallest q with beta(1+eta)^(q+1) >= T
    q2 = math.ceil(math.log(T / beta) / math.log1p(eta)) - 1
    while _geometric_boundary(beta, eta, q2 + 1) < T:
        q2 += 1
    while q2 > q1 and _geometric_boundary(beta, eta, q2) >= T:
        q2 -= 1
    k = int(math.floor(_geometric_boundary(beta, eta, q1)))
    L = max(1, math.ceil(math.log2(cfg.n)))
    lam = even_independence(2 * math.log2(1000 * (L + 1) * math.log2(4 * T) / eta))
    B = (math.log2(4 * T) / eta) * 100 * (L + 1) * (32 * lam / eta**3) * (1 + eta) ** cfg.p
    return LevelSetShape(
        beta=beta,
        tau=tau,
        q1=q1,
        q2=q2,
        k=k,
        L=L,
        lam=lam,
        B=B,
        qualify_floor=8 * lam / eta**2,
    )


def interval_index(shape: LevelSetShape, eta: float, f_hat: float):
    """The q with f_hat in (beta(1+eta)^q, beta(1+eta)^(q+1)], or below/above."""
    if f_hat < 0:
        raise ValueError(f"frequency estimate must be >= 0, got {f_hat}")
    beta = shape.beta
    if f_hat <= _geometric_boundary(beta, eta, shape.q1):
        return BELOW
    if f_hat > _geometric_boundary(beta, eta, shape.q2 + 1):
        return ABOVE
    q = math.floor(math.log(f_hat / beta) / math.log1p(eta))
    while _geometric_boundary(beta, eta, q) >= f_hat:
        q -= 1
    while _geometric_boundary(beta, eta, q + 1) < f_hat:
        q += 1
    if q < shape.q1:
        return BELOW
    if q > shape.q2:
        return ABOVE
    return q


def contributing_intervals(
    table: FrequencyTable, shape: LevelSetShape, eta: float, p: float
) -> list[tuple[float, float]]:
    """Test oracle: intervals carrying an eta/(#intervals) moment share.

    Singleton intervals {1..k} are contributing by definition; a geometric
    interval contributes when its exact member mass reaches
    eta*||S||_p^p / (q2-q1+1).  Returns (lo, hi] bounds.
    """
    total = sum(c**p for c in table.counts.values())
    spans: list[tuple[float, float]] = []
    for l in range(1, shape.k + 1):
        spans.append((l - 0.5, l + 0.5))
    cut = eta * total / (shape.q2 - shape.q1 + 1)
    for q in range(shape.q1, shape.q2 + 1):
        lo = _geometric_boundary(shape.beta, eta, q)
        hi = _geometric_boundary(shape.beta, eta, q + 1)
        mass = sum(c**p for c in table.counts.values() if lo < c <= hi)
        if mass >= cut:
            spans.append((lo, hi))
    return spans


class MomentState:
    """One copy of the level-set moment estimator.

    Holds one heavy-hitter sketch per subsampling level (level 0 sees the
    full stream), plus a per-frequency counter block for the head.  Interval
    populations take, per interval, the best qualifying level's report count
    rescaled by 2^i.
    """

    def __init__(
        self,
        cfg: MomentConfig,
        ctx: NoiseContext,
        epsilon_unit: float,
        record_derived: bool = False,
    ) -> None:
        self.cfg = cfg
        self._ctx = ctx
        self.derived: list[list[StreamEvent]] | None = None
        if record_derived:
            self.derived = []  # filled lazily once L is known
        beta = beta_sample(ctx, cfg.eta, cfg.T, cfg.beta_grid_exponent)
        # heavy-hitter instances: heaviness parameter B, trees at eps_unit/4
        levels = math.ceil(math.log2(cfg.T)) + 1 if cfg.T > 1 else 1
        tree_scale = levels / (epsilon_unit / 4)
        gamma2 = 0.0 if ctx.noise_off else cfg.gamma2_factor * tree_scale
        if cfg.tau is not None:
            tau = cfg.tau
        else:
            tau = 4.0 * math.sqrt(512.0 * gamma2**2 / cfg.eta**2)
        self.shape = build_shape(cfg, beta, tau)
        shape = self.shape
        hh_cfg = HHConfig(
            p=cfg.p,
            k=max(1, math.ceil(shape.B)),
            eta=cfg.eta,
            epsilon=epsilon_unit,
            xi=cfg.xi,
            T=cfg.T,
            n=cfg.n,
            copies=1,
            inner_buckets=cfg.inner_buckets,
            gamma2_factor=cfg.gamma2_factor,
            reeval=REEVAL_SUBSTREAM,
            m_override=min(10 * max(1, math.ceil(shape.B)) ** 2, _HASH_RANGE_CAP),
        )
        self.hh = [
            HHSketch(hh_cfg, ctx.child("moment-hh", i), epsilon_unit / 4, key=(i,))
            for i in range(shape.L + 1)
        ]
        self._g = GeometricLevelHash(shape.L, shape.lam, ctx.child_seed("moment-g"))
        self.low_freq = _make_low_freq_block(cfg, shape, epsilon_unit, ctx)
        self._level_cache: dict[int, int | None] = {}
        if self.derived is not None:
            self.derived = [[] for _ in range(shape.L + 1)]

    def _level(self, ident: int) -> int | None:
        hit = self._level_cache.get(ident, -2)
        if hit == -2:
            hit = self._g.level(ident)
            self._level_cache[ident] = hit
        return hit

    def ingest(self, e: StreamEvent) -> None:
        """Advance one timestamp without computing the estimate."""
        level = self._level(e.value) if e.is_element() else None
        self.hh[0].ingest(e)
        for i in range(1, self.shape.L + 1):
            self.hh[i].ingest(e if level == i else EMPTY_EVENT)
        self.low_freq.ingest(e)
        if self.derived is not None:
            self.derived[0].append(e)
            for i in range(1, self.shape.L + 1):
                self.derived[i].append(e if level == i else EMPTY_EVENT)

    def feed(self, e: StreamEvent) -> float:
        self.ingest(e)
        return self.current()

    def current(self) -> float:
        cfg, shape = self.cfg, self.shape
        eta = cfg.eta
        # interval populations from per-level reports
        z_hat: dict[int, float] = {q: 0.0 for q in range(shape.q1, shape.q2 + 1)}
        for i, sketch in enumerate(self.hh):
            counts: dict[int, int] = {}
            for f_hat in sketch.report().values():
                # noisy estimates can dip below zero; those sit below every
                # interval
                q = interval_index(shape, eta, max(0.0, f_hat))
                if isinstance(q, int):
                    counts[q] = counts.get(q, 0) + 1
            for q, cnt in counts.items():
                if i == 0 or cnt >= shape.qualify_floor:
                    z_hat[q] = max(z_hat[q], cnt * 2.0**i)
        total = 0.0
        for q, z in z_hat.items():
            if z:
                total += z * _geometric_boundary(shape.beta, eta, q) ** cfg.p
        for l, s_hat in enumerate(self.low_freq.current(), start=1):
            if cfg.clamp_low_freq:
                s_hat = max(0.0, s_hat)
            total += s_hat * l**cfg.p
        return total


def _make_low_freq_block(
    cfg: MomentConfig, shape: LevelSetShape, epsilon_unit: float, ctx: NoiseContext
):
    """Per-frequency counters for the head: direct for small universes,
    subsampled with a distinct-estimate selector otherwise."""
    lf_ctx = ctx.child("moment-lf")
    if cfg.n <= cfg.small_universe_limit:
        return LowFreqSmall(cfg.n, shape.k, cfg.T, epsilon_unit / (8 * shape.k), lf_ctx)
    from .distinct import GROUP, DistinctConfig, distinct_estimator
    from .low_freq import LowFreqGeneral

    eps_block = epsilon_unit / 3
    d_cfg = DistinctConfig(
        epsilon=eps_block,
        eta=0.1,
        xi=min(0.49, cfg.xi),
        n=cfg.n,
        T=cfg.T,
        variant=GROUP,
        copies=3,
    )
    d_hat = distinct_estimator(d_cfg, lf_ctx.child("dhat"))
    params = subsample_lowfreq_params(cfg.n, cfg.T, shape.k, cfg.eta, gamma1=0.0)

    def level_factory(i: int) -> LowFreqSmall:
        return LowFreqSmall(
            params.m,
            shape.k,
            cfg.T,
            eps_block / (8 * shape.k),
            lf_ctx.child("level", i),
        )

    return LowFreqGeneral(params, shape.k, cfg.eta, lf_ctx, level_factory, d_hat)


def moment_estimator(cfg: MomentConfig, ctx: NoiseContext) -> BoostedEstimator:
    """Boosted moment estimator; per copy the budget splits into 4 equal
    units (level-stream tuple worth 3, low-frequency block worth 1)."""
    copies = cfg.n_copies()
    eps_unit = cfg.epsilon / (4 * copies)
    budget = MechanismBudget(cfg.epsilon, cfg.xi)
    instances = []
    for c in range(copies):
        instances.append(MomentState(cfg, ctx.child("moment-copy", c), eps_unit))
        budget.allocate(f"copy-{c}", Fraction(1, copies), Fraction(1, copies))
    return BoostedEstimator(instances, median_boost, budget)
