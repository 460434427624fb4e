"""Continual-release lp heavy hitters over hashed substreams.

Elements are routed into m = 10k^2 substreams; each substream carries one
CountSketch that serves both the substream F2 estimate and per-element point
queries.  A candidate is kept when its squared estimate clears a fraction of
its substream's F2 plus a noise floor, and the report keeps the top
((1+eta)/(1-eta))^p * k candidates by estimate.

The per-timestamp universe scan of the written algorithm is replaced by
incremental candidacy: only the arriving element and current candidates are
re-tested (an element's frequency only grows on its own arrivals, so entry is
delayed at most until its next arrival).
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from fractions import Fraction

from .budget import MechanismBudget
from .randomness import NoiseContext, PolyHashFamily
from .streams import EMPTY_EVENT, StreamEvent
from .summing import Clock
from .countsketch import CountSketchState

REEVAL_ALL = "all"
REEVAL_SUBSTREAM = "substream"


@dataclass(frozen=True)
class HHConfig:
    """Heavy-hitter shape and error knobs.

    ``gamma2_factor`` scales the bucket noise scale into the additive error
    gamma2 entered in the candidacy threshold; the theory's union-bound value
    drowns every signal at realistic stream lengths, so the factor is a
    calibration knob (gamma2 is 0 with noise off).  ``C`` only enters the
    reported recall threshold ``tau``.
    """

    p: float
    k: int
    eta: float
    epsilon: float
    xi: float
    T: int
    n: int
    copies: int | None = None  # None: ceil(50 (ln(2T/xi) + ln n))
    inner_buckets: int = 8
    gamma2_factor: float = 0.1
    eta_f2: float = 0.1
    C: int = 3
    reeval: str = REEVAL_ALL
    m_override: int | None = None

    def __post_init__(self) -> None:
        if self.p < 0:
            raise ValueError(f"p must be >= 0, got {self.p}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0 < self.eta < 0.5:
            raise ValueError(f"eta must be in (0, 0.5), got {self.eta}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.reeval not in (REEVAL_ALL, REEVAL_SUBSTREAM):
            raise ValueError(f"unknown reeval policy {self.reeval!r}")

    @property
    def phi(self) -> float:
        if self.p <= 2:
            return 1.0
        return max(1.0, self.n ** (1.0 - 2.0 / self.p))

    @property
    def m(self) -> int:
        if self.m_override is not None:
            return self.m_override
        return 10 * self.k * self.k

    @property
    def report_cap(self) -> int:
        return math.floor(((1 + self.eta) / (1 - self.eta)) ** self.p * self.k)

    def n_copies(self) -> int:
        if self.copies is not None:
            return self.copies
        return math.ceil(50 * (math.log(2 * self.T / self.xi) + math.log(self.n)))


class HHSketch:
    """One copy of the substream heavy-hitter sketch."""

    def __init__(
        self,
        cfg: HHConfig,
        ctx: NoiseContext,
        epsilon_tree: float,
        key: tuple = (),
        record_derived: bool = False,
    ) -> None:
        self.cfg = cfg
        self._ctx = ctx
        self._key = ("hh",) + tuple(key)
        self.epsilon_tree = float(epsilon_tree)
        levels = math.ceil(math.log2(cfg.T)) + 1 if cfg.T > 1 else 1
        self.noise_scale = levels / self.epsilon_tree
        self.gamma2 = 0.0 if ctx.noise_off else cfg.gamma2_factor * self.noise_scale
        self.gamma1 = 4 * cfg.inner_buckets * self.gamma2**2 / cfg.eta_f2
        self._h = PolyHashFamily(2, cfg.m, ctx.child_seed(*self._key, "route"))
        self._clock = Clock(cfg.T)
        self._sketches: dict[int, CountSketchState] = {}
        self._route_cache: dict[int, int] = {}
        self._f2_cache: dict[int, tuple[int, float]] = {}
        self.candidates: dict[int, float] = {}
        self.derived: list[list[StreamEvent]] | None = None
        if record_derived:
            self.derived = [[] for _ in range(cfg.m)]

    @property
    def t(self) -> int:
        return self._clock.t

    def _substream(self, idx: int) -> CountSketchState:
        sketch = self._sketches.get(idx)
        if sketch is None:
            sketch = CountSketchState(
                self.cfg.inner_buckets,
                self.cfg.T,
                self.epsilon_tree,
                self._ctx,
                key=self._key + ("sub", idx),
                clock=self._clock,
            )
            self._sketches[idx] = sketch
        return sketch

    def _route(self, ident: int) -> int:
        idx = self._route_cache.get(ident)
        if idx is None:
            idx = self._h(ident)
            self._route_cache[ident] = idx
        return idx

    def _substream_f2(self, idx: int) -> float:
        cached = self._f2_cache.get(idx)
        if cached is not None and cached[0] == self._clock.t:
            return cached[1]
        value = self._substream(idx).f2().value
        self._f2_cache[idx] = (self._clock.t, value)
        return value

    def _passes(self, ident: int) -> float | None:
        idx = self._route(ident)
        f_hat = self._substream(idx).point_query(ident)
        floor = 512 * self.gamma2**2 / self.cfg.eta**2
        if f_hat * f_hat < floor:
            return None  # the F2 term can only raise the bar
        bar = (self._substream_f2(idx) + self.gamma1) / (
            25 * self.cfg.phi * self.cfg.k
        ) + floor
        if f_hat * f_hat >= bar:
            return f_hat
        return None

    def ingest(self, e: StreamEvent) -> None:
        """Advance one timestamp and refresh candidacy, skipping the report."""
        self._clock.tick()
        arrived = None
        if e.is_element():
            arrived = e.value
            self._substream(self._route(arrived)).observe(e)
        if self.derived is not None:
            for i in range(self.cfg.m):
                ev = e if arrived is not None and self._route(arrived) == i else EMPTY_EVENT
                self.derived[i].append(ev)
        if self.cfg.reeval == REEVAL_ALL:
            retest = set(self.candidates)
        else:
            if arrived is None:
                retest = set()
            else:
                idx = self._route(arrived)
                retest = {b for b in self.candidates if self._route(b) == idx}
        if arrived is not None:
            retest.add(arrived)
        for b in retest:
            f_hat = self._passes(b)
            if f_hat is None:
                self.candidates.pop(b, None)
            else:
                self.candidates[b] = f_hat

    def feed(self, e: StreamEvent) -> dict[int, float]:
        self.ingest(e)
        return self.report()

    def report(self) -> dict[int, float]:
        """Top candidates by estimate, ties favouring the smaller element id."""
        ranked = sorted(self.candidates.items(), key=lambda kv: (-kv[1], kv[0]))
        return dict(ranked[: self.cfg.report_cap])


class HHEstimator:
    """Boosted heavy hitters: union of copy reports, median of their estimates."""

    def __init__(self, cfg: HHConfig, ctx: NoiseContext) -> None:
        self.cfg = cfg
        copies = cfg.n_copies()
        # 4 = substream routing sensitivity (2) times bucket routing inside
        # the per-substream sketch (2)
        self.epsilon_tree = cfg.epsilon / (4 * copies)
        self.copies = [
            HHSketch(cfg, ctx.child("hh-copy", c), self.epsilon_tree, key=(c,))
            for c in range(copies)
        ]
        self.budget = MechanismBudget(cfg.epsilon, cfg.xi)
        for c in range(copies):
            self.budget.allocate(f"copy-{c}", Fraction(1, copies), Fraction(1, copies))

    def feed(self, e: StreamEvent) -> dict[int, float]:
        reports = [copy.feed(e) for copy in self.copies]
        return self._combine(reports)

    def _combine(self, reports: list[dict[int, float]]) -> dict[int, float]:
        # interpolated median: the lower-median convention would bias the
        # estimate low whenever an even number of copies report an element
        union: dict[int, list[float]] = {}
        for rep in reports:
            for ident, f_hat in rep.items():
                union.setdefault(ident, []).append(f_hat)
        return {ident: statistics.median(vals) for ident, vals in union.items()}

    def report(self) -> dict[int, float]:
        return self._combine([copy.report() for copy in self.copies])

    @property
    def report_cap(self) -> int:
        return len(self.copies) * self.cfg.report_cap

    @property
    def tau(self) -> float:
        """Recall threshold: frequencies above it are reported w.h.p.

        The larger of the theory form (1/(eps*eta)) * ln^C(Tkn/(xi*eta)) and
        the candidacy floor 4*sqrt(gamma1/(phi k) + 512 gamma2^2/eta^2).
        """
        cfg = self.cfg
        theory = (
            1.0
            / (cfg.epsilon * cfg.eta)
            * math.log(cfg.T * cfg.k * cfg.n / (cfg.xi * cfg.eta)) ** cfg.C
        )
        probe = self.copies[0]
        floor = 4.0 * math.sqrt(
            probe.gamma1 / (cfg.phi * cfg.k) + 512 * probe.gamma2**2 / cfg.eta**2
        )
        return max(theory, floor)


def exact_substream_values(sketch: HHSketch, frequencies: dict[int, int]) -> dict[int, float]:
    """Oracle: noiseless CountSketch value g(a)*z_{h(a)} for each element.

    Used by tests to separate DP noise from hash-collision error.
    """
    totals: dict[tuple[int, int], float] = {}
    for ident, freq in frequencies.items():
        idx = sketch._route(ident)
        inner = sketch._substream(idx)
        bucket, sign = inner._route(ident)
        totals[(idx, bucket)] = totals.get((idx, bucket), 0.0) + sign * freq
    values = {}
    for ident in frequencies:
        idx = sketch._route(ident)
        inner = sketch._substream(idx)
        bucket, sign = inner._route(ident)
        values[ident] = sign * totals[(idx, bucket)]
    return values
