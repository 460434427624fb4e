"""Continual-release distinct-element counting.

Small universes reduce to summing a 0/1 first-appearance indicator stream;
general universes subsample elements into geometric levels, count distinct
hashed values per level with the small-universe counter, and rescale the
deepest level that still holds enough mass.  Boosting takes the per-timestamp
lower median over independent copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .budget import MechanismBudget
from .randomness import (
    GeometricLevelHash,
    NoiseContext,
    PolyHashFamily,
    even_independence,
    median_boost,
)
from .streams import EMPTY_EVENT, StreamEvent, integer
from .summing import BinaryTreeMechanism, GroupingMechanism

TREE = "tree"
GROUP = "group"

# one universe change flips at most 5 entries of the indicator stream
INDICATOR_SENSITIVITY = 5


def make_summing_backend(
    variant: str,
    T: int,
    epsilon: float,
    eta: float,
    xi: float,
    ctx: NoiseContext,
    key: tuple = (),
):
    if variant == TREE:
        return BinaryTreeMechanism(T, epsilon, ctx, key=key)
    if variant == GROUP:
        return GroupingMechanism(T, epsilon, eta, xi, ctx)
    raise ValueError(f"unknown summing variant {variant!r}")


def backend_guarantee(mech, xi: float) -> tuple[float, float]:
    """(alpha, gamma) approximation guarantee of a summing backend."""
    if isinstance(mech, BinaryTreeMechanism):
        return 1.0, mech.error_bound(xi)
    if isinstance(mech, GroupingMechanism):
        return mech.alpha, mech.error_bound(xi)
    raise TypeError(f"unknown summing backend {type(mech)!r}")


class SmallUniverseDistinct:
    """Distinct count over a universe of size at most m via indicator summing.

    Feeds 1 to the inner summing mechanism exactly when a fresh non-empty
    element arrives, else 0; with noise off the output equals the exact
    distinct count at every timestamp.
    """

    def __init__(self, m: int, inner, record_derived: bool = False) -> None:
        self.m = int(m)
        self.inner = inner
        self.seen: set[int] = set()
        self.derived: list[StreamEvent] | None = [] if record_derived else None

    def feed(self, e: StreamEvent) -> float:
        x = 0
        if e.is_element():
            if e.value >= self.m:
                raise ValueError(f"element id {e.value} outside universe [0, {self.m})")
            if e.value not in self.seen:
                self.seen.add(e.value)
                x = 1
        elif e.is_integer():
            raise ValueError("distinct counting requires an elements-mode stream")
        if self.derived is not None:
            self.derived.append(integer(x))
        self.inner.feed(x)
        return self.inner.current()

    def current(self) -> float:
        return self.inner.current()


@dataclass(frozen=True)
class SubsampleParams:
    """Derived shape of the subsampled estimator (evaluated copies -> xi share
    -> gamma -> m, see the estimator factory)."""

    L: int
    lam: int
    m: int
    alpha: float
    gamma: float
    threshold: float


def subsample_params(
    n: int, T: int, eta: float, alpha: float, gamma: float, lam: int | None = None
) -> SubsampleParams:
    L = max(1, math.ceil(math.log2(min(n, T))))
    if lam is None:
        lam = even_independence(2 * math.log2(1000 * L))
    threshold = max(gamma / eta, 32 * alpha * lam / eta**2)
    m = math.ceil(100 * L * (16 * alpha * threshold) ** 2)
    return SubsampleParams(L=L, lam=lam, m=m, alpha=alpha, gamma=gamma, threshold=threshold)


class SubsampledDistinct:
    """Distinct count for a general universe via geometric subsampling.

    Each element lands on one level (or none) under the level hash; the level
    stream stores the pairwise-hashed id.  The output rescales the deepest
    level whose estimate clears the selection threshold.
    """

    def __init__(
        self,
        params: SubsampleParams,
        ctx: NoiseContext,
        summing_factory: Callable[[tuple], object],
        record_derived: bool = False,
    ) -> None:
        self.params = params
        self._h = PolyHashFamily(2, params.m, ctx.child_seed("subsample-h"))
        self._g = GeometricLevelHash(params.L, params.lam, ctx.child_seed("subsample-g"))
        self.levels = [
            SmallUniverseDistinct(params.m, summing_factory(("level", i)))
            for i in range(1, params.L + 1)
        ]
        self._route_cache: dict[int, tuple[int | None, int]] = {}
        self.derived: list[list[StreamEvent]] | None = None
        if record_derived:
            self.derived = [[] for _ in range(params.L)]

    def _route(self, ident: int) -> tuple[int | None, int]:
        hit = self._route_cache.get(ident)
        if hit is None:
            hit = (self._g.level(ident), self._h(ident))
            self._route_cache[ident] = hit
        return hit

    def feed(self, e: StreamEvent) -> float:
        level, hashed = (None, 0)
        if e.is_element():
            level, hashed = self._route(e.value)
        for i, counter in enumerate(self.levels, start=1):
            ev = StreamEvent("element", hashed) if level == i else EMPTY_EVENT
            counter.feed(ev)
            if self.derived is not None:
                self.derived[i - 1].append(ev)
        return self.current()

    def current(self) -> float:
        best = 0.0
        for i in range(self.params.L, 0, -1):
            s_i = self.levels[i - 1].current()
            if s_i >= self.params.threshold:
                best = s_i * 2.0**i
                break
        return best

    def level_estimates(self) -> list[float]:
        return [c.current() for c in self.levels]


class BoostedEstimator:
    """Independent copies combined per timestamp (lower median by default)."""

    def __init__(
        self,
        copies: Sequence,
        combiner: Callable[[Sequence[float]], float] = median_boost,
        budget: MechanismBudget | None = None,
    ) -> None:
        if not copies:
            raise ValueError("boosted estimator needs at least one copy")
        self.copies = list(copies)
        self.combiner = combiner
        self.budget = budget

    def feed(self, e: StreamEvent) -> float:
        return self.combiner([c.feed(e) for c in self.copies])

    def ingest(self, e: StreamEvent) -> None:
        for c in self.copies:
            if hasattr(c, "ingest"):
                c.ingest(e)
            else:
                c.feed(e)

    def current(self) -> float:
        return self.combiner([c.current() for c in self.copies])


@dataclass(frozen=True)
class DistinctConfig:
    epsilon: float
    eta: float
    xi: float
    n: int
    T: int
    variant: str = GROUP
    copies: int | None = None  # None: ceil(50 ln(2T/xi)) per the boosting recipe
    lam: int | None = None

    def __post_init__(self) -> None:
        if not 0 < self.eta < 0.5:
            raise ValueError(f"eta must be in (0, 0.5), got {self.eta}")
        if not 0 < self.xi < 0.5:
            raise ValueError(f"xi must be in (0, 0.5), got {self.xi}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.variant not in (TREE, GROUP):
            raise ValueError(f"variant must be tree or group, got {self.variant!r}")


def default_distinct_copies(T: int, xi: float) -> int:
    return math.ceil(50 * math.log(2 * T / xi))


def distinct_estimator(cfg: DistinctConfig, ctx: NoiseContext) -> BoostedEstimator:
    """Boosted general-universe distinct estimator with budget ledger.

    Per copy: the level tuple is released once (partition-style sensitivity),
    each level's indicator summing runs at eps_copy/5 since one universe
    change flips at most 5 indicator entries.  Parameter evaluation order:
    copies -> xi share -> (alpha, gamma) -> m.
    """
    copies = cfg.copies if cfg.copies is not None else default_distinct_copies(cfg.T, cfg.xi)
    eps_copy = cfg.epsilon / copies
    eps_sum = eps_copy / INDICATOR_SENSITIVITY

    L = max(1, math.ceil(math.log2(min(cfg.n, cfg.T))))
    xi_inner = (cfg.xi / 2) / (L * copies)

    probe_ctx = ctx.child("distinct-probe")
    probe = make_summing_backend(
        cfg.variant, cfg.T, eps_sum, cfg.eta, xi_inner, probe_ctx
    )
    alpha, gamma = backend_guarantee(probe, xi_inner)
    params = subsample_params(cfg.n, cfg.T, cfg.eta, alpha, gamma, lam=cfg.lam)

    budget = MechanismBudget(cfg.epsilon, cfg.xi)
    instances = []
    for c in range(copies):
        copy_ctx = ctx.child("distinct-copy", c)

        def factory(key: tuple, _ctx=copy_ctx) -> object:
            return make_summing_backend(
                cfg.variant, cfg.T, eps_sum, cfg.eta, xi_inner, _ctx.child(*key)
            )

        instances.append(SubsampledDistinct(params, copy_ctx, factory))
        budget.allocate(f"copy-{c}", Fraction(1, copies), Fraction(1, copies))
    return BoostedEstimator(instances, median_boost, budget)
