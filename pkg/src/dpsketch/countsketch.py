"""Continual-release CountSketch with DP point queries and F2 estimation.

Buckets are dyadic-tree noisy counters sharing one clock, stored as a flat
running-sum array with per-node keyed noise, which is observationally
identical to one tree mechanism per bucket but cheap to construct for large
bucket counts.  Buckets take signed contributions, so the tree mechanism (not
the grouping one) backs them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .budget import MechanismBudget
from .randomness import (
    NoiseContext,
    PolyHashFamily,
    SignHash,
    fold_key,
    median_boost,
    node_laplace,
)
from .streams import StreamEvent, integer
from .summing import Clock, _dyadic_nodes


@dataclass(frozen=True)
class F2Estimate:
    """Sum of squared bucket outputs with its target error split."""

    value: float
    eta: float
    additive: float


class CountSketchState:
    """One CountSketch: k signed buckets over a shared time axis.

    Each non-empty event adds its sign to exactly one bucket; every bucket's
    output is its running sum plus the noise of the dyadic nodes tiling
    [1, t], each node carrying an independent Laplace draw of scale
    (ceil(log2 T)+1)/epsilon_bucket.
    """

    def __init__(
        self,
        k: int,
        T: int,
        epsilon_bucket: float,
        ctx: NoiseContext,
        key: tuple = (),
        clock: Clock | None = None,
        record_derived: bool = False,
    ) -> None:
        if k < 1:
            raise ValueError(f"bucket count must be >= 1, got {k}")
        if epsilon_bucket <= 0:
            raise ValueError(f"epsilon must be > 0, got {epsilon_bucket}")
        self.k = int(k)
        self.T = int(T)
        self.epsilon_bucket = float(epsilon_bucket)
        self.levels = math.ceil(math.log2(self.T)) + 1 if self.T > 1 else 1
        self.noise_scale = self.levels / self.epsilon_bucket
        self._ctx = ctx
        self._key = ("cs",) + tuple(key)
        self._clock = clock if clock is not None else Clock(self.T)
        self._owns_clock = clock is None
        self.h = PolyHashFamily(4, self.k, ctx.child_seed(*self._key, "h"))
        self.g = SignHash(ctx.child_seed(*self._key, "g"))
        self._running = np.zeros(self.k)
        self._noise: dict[int, float] = {}
        self._bucket_bases: dict[int, int] = {}
        self._route_cache: dict[int, tuple[int, int]] = {}
        self.derived: list[list[StreamEvent]] | None = None
        if record_derived:
            self.derived = [[] for _ in range(self.k)]

    @property
    def t(self) -> int:
        return self._clock.t

    def _route(self, ident: int) -> tuple[int, int]:
        hit = self._route_cache.get(ident)
        if hit is None:
            hit = (self.h(ident), self.g(ident))
            self._route_cache[ident] = hit
        return hit

    def observe(self, e: StreamEvent) -> None:
        """Ingest the current timestamp's event without advancing the clock."""
        bucket, sign = None, 0
        if e.is_element():
            bucket, sign = self._route(e.value)
            self._running[bucket] += sign
        elif e.is_integer():
            raise ValueError("CountSketch requires an elements-mode stream")
        if self.derived is not None:
            for i in range(self.k):
                self.derived[i].append(integer(sign if i == bucket else 0))

    def feed(self, e: StreamEvent) -> None:
        if not self._owns_clock:
            raise RuntimeError("shared-clock sketch is advanced by its owner")
        self._clock.tick()
        self.observe(e)

    def _bucket_noise(self, i: int) -> float:
        base = self._bucket_bases.get(i)
        if base is None:
            base = fold_key(self._ctx.master_seed, self._key + ("bucket", i))
            self._bucket_bases[i] = base
        total = 0.0
        cache = self._noise
        scale = self.noise_scale
        for level, index in _dyadic_nodes(self._clock.t):
            node = (i << 54) | (level << 48) | index
            noise = cache.get(node)
            if noise is None:
                noise = node_laplace(base, level, index, scale)
                cache[node] = noise
            total += noise
        return total

    def bucket_output(self, i: int) -> float:
        if self._ctx.noise_off:
            return float(self._running[i])
        return float(self._running[i]) + self._bucket_noise(i)

    def outputs(self) -> np.ndarray:
        if self._ctx.noise_off:
            return self._running.copy()
        return np.array([self.bucket_output(i) for i in range(self.k)])

    def point_query(self, ident: int) -> float:
        """Frequency estimate g(a) * z_{h(a)} for one element."""
        bucket, sign = self._route(ident)
        return sign * self.bucket_output(bucket)

    def f2(self, eta: float = 0.0, additive: float = 0.0) -> F2Estimate:
        """Sum of squared bucket outputs."""
        if self._ctx.noise_off:
            value = float(self._running @ self._running)
        else:
            value = float(sum(self.bucket_output(i) ** 2 for i in range(self.k)))
        return F2Estimate(value=value, eta=eta, additive=additive)

    def error_bound(self, xi: float) -> float:
        """Per-bucket additive noise bound, all t and buckets jointly w.p. 1-xi."""
        if not 0 < xi < 1:
            raise ValueError(f"xi must be in (0, 1), got {xi}")
        if self._ctx.noise_off:
            return 0.0
        return self.levels * self.noise_scale * math.log(2 * self.T * self.k / xi)


@dataclass(frozen=True)
class L2Config:
    epsilon: float
    eta: float
    xi: float
    n: int
    T: int
    copies: int | None = None  # None: ceil(50 (ln(2T/xi) + ln n))
    buckets: int | None = None  # None: ceil(400 / eta^2)

    def __post_init__(self) -> None:
        if not 0 < self.eta < 0.5:
            raise ValueError(f"eta must be in (0, 0.5), got {self.eta}")
        if not 0 < self.xi < 0.5:
            raise ValueError(f"xi must be in (0, 0.5), got {self.xi}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


def default_l2_copies(T: int, xi: float, n: int) -> int:
    return math.ceil(50 * (math.log(2 * T / xi) + math.log(n)))


def default_l2_buckets(eta: float) -> int:
    return math.ceil(400 / eta**2)


class L2Estimator:
    """Boosted frequency and F2 estimator: per-timestamp medians over copies."""

    def __init__(self, cfg: L2Config, ctx: NoiseContext) -> None:
        self.cfg = cfg
        copies = cfg.copies if cfg.copies is not None else default_l2_copies(
            cfg.T, cfg.xi, cfg.n
        )
        k = cfg.buckets if cfg.buckets is not None else default_l2_buckets(cfg.eta)
        # one universe change moves +-1 between two buckets of one copy
        eps_bucket = cfg.epsilon / (2 * copies)
        self.copies = [
            CountSketchState(k, cfg.T, eps_bucket, ctx.child("l2-copy", c), key=(c,))
            for c in range(copies)
        ]
        self.budget = MechanismBudget(cfg.epsilon, cfg.xi)
        for c in range(copies):
            self.budget.allocate(f"copy-{c}", Fraction(1, copies), Fraction(1, copies))

    def feed(self, e: StreamEvent) -> None:
        for sketch in self.copies:
            sketch.feed(e)

    def point_query(self, ident: int) -> float:
        return median_boost([s.point_query(ident) for s in self.copies])

    def f2(self) -> float:
        return median_boost([s.f2().value for s in self.copies])
