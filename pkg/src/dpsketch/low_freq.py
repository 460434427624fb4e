"""Counting elements of each exact frequency 1..k.

Small universes difference-encode frequency transitions into k signed count
streams (an arrival whose new frequency is j adds +1 to stream j and -1 to
stream j-1), each summed by a tree counter.  General universes subsample into
geometric levels, run the small-universe counter per level on hashed ids, and
rescale the deepest level justified by a distinct-count estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .budget import MechanismBudget
from .distinct import (
    GROUP,
    BoostedEstimator,
    DistinctConfig,
    distinct_estimator,
    make_summing_backend,
)
from .randomness import (
    GeometricLevelHash,
    NoiseContext,
    PolyHashFamily,
    even_independence,
    median_boost,
)
from .streams import EMPTY_EVENT, StreamEvent, element, integer
from .summing import BinaryTreeMechanism, Clock

# one universe change perturbs each counter stream in at most 8 unit steps
COUNTER_SENSITIVITY_PER_K = 8

_HASH_RANGE_CAP = 1 << 60


class LowFreqSmall:
    """Exact-frequency counts over a small universe via k signed counters.

    With noise off, counter i's total equals |{a : f_a = i}| at every
    timestamp.  Counters hold +-1 inputs, so they are tree-backed.
    """

    def __init__(
        self,
        m: int,
        k: int,
        T: int,
        epsilon_counter: float,
        ctx: NoiseContext,
        key: tuple = (),
        record_derived: bool = False,
    ) -> None:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.m = int(m)
        self.k = int(k)
        self._clock = Clock(T)
        self._key = ("lfs",) + tuple(key)
        self.counters = [
            BinaryTreeMechanism(
                T, epsilon_counter, ctx, key=self._key + (i,), clock=self._clock
            )
            for i in range(1, k + 1)
        ]
        self.freq: dict[int, int] = {}
        self.derived: list[list[StreamEvent]] | None = None
        if record_derived:
            self.derived = [[] for _ in range(k)]

    @property
    def t(self) -> int:
        return self._clock.t

    def ingest(self, e: StreamEvent) -> None:
        """Advance one timestamp without computing the counter outputs."""
        self._clock.tick()
        plus = minus = None
        if e.is_element():
            if e.value >= self.m:
                raise ValueError(f"element id {e.value} outside universe [0, {self.m})")
            j = self.freq.get(e.value, 0) + 1
            self.freq[e.value] = j
            if j <= self.k:
                plus = j
                self.counters[j - 1].add(1)
            if 2 <= j <= self.k + 1:
                minus = j - 1
                self.counters[j - 2].add(-1)
        elif e.is_integer():
            raise ValueError("low-frequency counting requires an elements-mode stream")
        if self.derived is not None:
            for i in range(1, self.k + 1):
                x = 1 if i == plus else (-1 if i == minus else 0)
                self.derived[i - 1].append(integer(x))

    def feed(self, e: StreamEvent) -> list[float]:
        self.ingest(e)
        return self.current()

    def current(self) -> list[float]:
        return [c.current() for c in self.counters]


@dataclass(frozen=True)
class SubsampleLowFreqParams:
    L: int
    lam: int
    m: int
    gamma1: float
    selection_floor: float  # 64*lam/eta^2


def subsample_lowfreq_params(
    n: int, T: int, k: int, eta: float, gamma1: float, lam: int | None = None
) -> SubsampleLowFreqParams:
    L = max(1, math.ceil(math.log2(min(n, T))))
    if lam is None:
        lam = even_independence(2 * math.log2(1000 * k))
    m = min(math.ceil(100 * (25600 * lam / eta**2) ** 2), _HASH_RANGE_CAP)
    return SubsampleLowFreqParams(
        L=L, lam=lam, m=m, gamma1=gamma1, selection_floor=64 * lam / eta**2
    )


class LowFreqGeneral:
    """Per-frequency counts for a general universe via level subsampling.

    The distinct estimate picks the deepest level whose expected sample count
    still clears the selection floor; level counts are rescaled by 2^i*.
    Outputs all zeros while the distinct estimate is below
    max(3*gamma1, floor).
    """

    def __init__(
        self,
        params: SubsampleLowFreqParams,
        k: int,
        eta: float,
        ctx: NoiseContext,
        level_factory: Callable[[int], LowFreqSmall],
        distinct_backend,
    ) -> None:
        self.params = params
        self.k = int(k)
        self.eta = float(eta)
        self._h = PolyHashFamily(2, params.m, ctx.child_seed("lfg-h"))
        self._g = GeometricLevelHash(params.L, params.lam, ctx.child_seed("lfg-g"))
        self.levels = [level_factory(i) for i in range(1, params.L + 1)]
        self.d_hat = distinct_backend
        self._route_cache: dict[int, tuple[int | None, int]] = {}

    def _route(self, ident: int) -> tuple[int | None, int]:
        hit = self._route_cache.get(ident)
        if hit is None:
            hit = (self._g.level(ident), self._h(ident))
            self._route_cache[ident] = hit
        return hit

    def ingest(self, e: StreamEvent) -> None:
        level, hashed = (None, 0)
        if e.is_element():
            level, hashed = self._route(e.value)
        for i, counter in enumerate(self.levels, start=1):
            counter.ingest(element(hashed) if level == i else EMPTY_EVENT)
        self.d_hat.feed(e)

    def feed(self, e: StreamEvent) -> list[float]:
        self.ingest(e)
        return self.current()

    def current(self) -> list[float]:
        d_val = self.d_hat.current()
        floor = self.params.selection_floor
        if d_val <= max(3 * self.params.gamma1, floor):
            return [0.0] * self.k
        i_star = None
        for i in range(self.params.L, 0, -1):
            if 2**i * floor <= d_val:
                i_star = i
                break
        if i_star is None:
            return [0.0] * self.k
        scale = 2.0**i_star
        return [s * scale for s in self.levels[i_star - 1].current()]


@dataclass(frozen=True)
class LowFreqConfig:
    epsilon: float
    eta: float
    xi: float
    k: int
    n: int
    T: int
    copies: int | None = None  # None: ceil(50 ln(3T/xi))
    lam: int | None = None
    small_universe_limit: int = 1 << 14
    distinct_copies: int = 3  # sub-budgeted d-hat estimator copies

    def __post_init__(self) -> None:
        if not 0 < self.eta < 0.5:
            raise ValueError(f"eta must be in (0, 0.5), got {self.eta}")
        if not 0 < self.xi < 0.5:
            raise ValueError(f"xi must be in (0, 0.5), got {self.xi}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


def default_lowfreq_copies(T: int, xi: float) -> int:
    return math.ceil(50 * math.log(3 * T / xi))


def _median_vectors(vectors: Sequence[Sequence[float]]) -> list[float]:
    return [median_boost([v[j] for v in vectors]) for j in range(len(vectors[0]))]


def lowfreq_estimator(cfg: LowFreqConfig, ctx: NoiseContext) -> BoostedEstimator:
    """Boosted per-frequency count estimator with budget ledger.

    Per copy the budget splits three ways: the level tuple is touched twice
    per universe change and the distinct estimate once, so each level's
    counter block and the distinct backend run at eps_copy/3 (counters then
    divide by the 8k stream sensitivity).
    """
    copies = cfg.copies if cfg.copies is not None else default_lowfreq_copies(cfg.T, cfg.xi)
    eps_copy = cfg.epsilon / copies
    eps_block = eps_copy / 3
    eps_counter = eps_block / (COUNTER_SENSITIVITY_PER_K * cfg.k)

    small = cfg.n <= cfg.small_universe_limit
    budget = MechanismBudget(cfg.epsilon, cfg.xi)
    instances = []
    for c in range(copies):
        copy_ctx = ctx.child("lowfreq-copy", c)
        if small:
            # direct small-universe counting: no subsampling, no d-hat
            instances.append(
                LowFreqSmall(cfg.n, cfg.k, cfg.T, eps_copy / (8 * cfg.k), copy_ctx)
            )
        else:
            probe = BinaryTreeMechanism(cfg.T, eps_counter, copy_ctx.child("probe"))
            xi_inner = cfg.xi / (3 * copies)
            gamma2 = probe.error_bound(xi_inner)
            d_cfg = DistinctConfig(
                epsilon=eps_block,
                eta=0.1,
                xi=min(0.49, xi_inner),
                n=cfg.n,
                T=cfg.T,
                variant=GROUP,
                copies=cfg.distinct_copies,
            )
            d_hat = distinct_estimator(d_cfg, copy_ctx.child("dhat"))
            gamma1 = _distinct_gamma(d_cfg, copy_ctx)
            params = subsample_lowfreq_params(
                cfg.n, cfg.T, cfg.k, cfg.eta, gamma1, lam=cfg.lam
            )

            def level_factory(i: int, _ctx=copy_ctx, _params=params) -> LowFreqSmall:
                return LowFreqSmall(
                    _params.m, cfg.k, cfg.T, eps_counter, _ctx.child("level", i)
                )

            instances.append(
                LowFreqGeneral(params, cfg.k, cfg.eta, copy_ctx, level_factory, d_hat)
            )
        budget.allocate(f"copy-{c}", Fraction(1, copies), Fraction(1, copies))
    return BoostedEstimator(instances, _median_vectors, budget)


def _distinct_gamma(d_cfg: DistinctConfig, ctx: NoiseContext) -> float:
    """Additive bound of the distinct backend used in the level-selection rule."""
    from .distinct import backend_guarantee, default_distinct_copies

    copies = d_cfg.copies or default_distinct_copies(d_cfg.T, d_cfg.xi)
    eps_sum = d_cfg.epsilon / copies / 5
    L = max(1, math.ceil(math.log2(min(d_cfg.n, d_cfg.T))))
    xi_inner = (d_cfg.xi / 2) / (L * copies)
    probe = make_summing_backend(
        d_cfg.variant, d_cfg.T, eps_sum, d_cfg.eta, xi_inner, ctx.child("gamma-probe")
    )
    _, gamma = backend_guarantee(probe, xi_inner)
    return gamma
