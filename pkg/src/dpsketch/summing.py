"""Continual-release summing: the binary-tree mechanism and the grouping
mechanism (better additive error for non-negative streams).

Both follow the uniform contract "feed one value, read one running estimate".
Tree counters may share a clock so that a sketch of many buckets advances time
once per event; feeding zeros to untouched buckets is then pure bookkeeping.
Instances are single-owner mutable and independent across threads.
"""

from __future__ import annotations

import math

from .randomness import NoiseContext, fold_key, node_laplace


class StateError(RuntimeError):
    """Mechanism driven past its declared horizon."""


class Clock:
    """Shared 1-based timestamp for a family of tree counters."""

    __slots__ = ("t", "T")

    def __init__(self, T: int) -> None:
        if T < 1:
            raise ValueError(f"T must be >= 1, got {T}")
        self.T = T
        self.t = 0

    def tick(self) -> int:
        if self.t >= self.T:
            raise StateError(f"stream horizon T={self.T} exhausted")
        self.t += 1
        return self.t


def _dyadic_nodes(t: int) -> list[tuple[int, int]]:
    """Dyadic intervals tiling [1, t], as (level, index) pairs.

    Level j covers blocks of length 2^j; the decomposition follows the set
    bits of t from the highest down.
    """
    nodes = []
    pos = 0
    bit = t.bit_length() - 1
    while bit >= 0:
        if t & (1 << bit):
            nodes.append((bit, pos >> bit))
            pos += 1 << bit
        bit -= 1
    return nodes


class BinaryTreeMechanism:
    """Dyadic-tree noisy prefix sums; handles signed inputs.

    Each input touches ceil(log2 T)+1 nodes, each node carries one Laplace
    draw of scale (ceil(log2 T)+1)/epsilon, drawn lazily and keyed by the node
    so replay is order-independent.  The running exact sum plus the noise of
    the nodes tiling [1, t] equals the classic per-node construction.
    """

    def __init__(
        self,
        T: int,
        epsilon: float,
        ctx: NoiseContext,
        key: tuple = (),
        clock: Clock | None = None,
    ) -> None:
        if epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {epsilon}")
        self.T = int(T)
        self.epsilon = float(epsilon)
        self.levels = math.ceil(math.log2(self.T)) + 1 if self.T > 1 else 1
        self.noise_scale = self.levels / self.epsilon
        self._ctx = ctx
        self._key = ("tree",) + tuple(key)
        self._noise_base = fold_key(ctx.master_seed, self._key)
        self._clock = clock if clock is not None else Clock(self.T)
        self._owns_clock = clock is None
        self._running = 0.0
        self._node_noise: dict[int, float] = {}

    @property
    def t(self) -> int:
        return self._clock.t

    def add(self, x: float) -> None:
        """Credit x to the current timestamp without advancing the clock."""
        self._running += x

    def feed(self, x: float) -> float:
        """Advance one timestamp, ingest x, return the noisy prefix sum."""
        if not self._owns_clock:
            raise StateError("shared-clock counter is advanced by its owner")
        self._clock.tick()
        self._running += x
        return self.current()

    def current(self) -> float:
        """Noisy prefix sum at the clock's current timestamp."""
        if self._ctx.noise_off:
            return self._running
        total = self._running
        cache = self._node_noise
        base = self._noise_base
        scale = self.noise_scale
        for level, index in _dyadic_nodes(self._clock.t):
            node = (level << 48) | index
            noise = cache.get(node)
            if noise is None:
                noise = node_laplace(base, level, index, scale)
                cache[node] = noise
            total += noise
        return total

    def error_bound(self, xi: float) -> float:
        """Additive bound holding for every t in [T] jointly w.p. >= 1 - xi.

        Each prefix output sums at most ``levels`` node noises; a union bound
        over the <= 2T distinct nodes gives per-node magnitude
        scale*ln(2T/xi).
        """
        if not 0 < xi < 1:
            raise ValueError(f"xi must be in (0, 1), got {xi}")
        if self._ctx.noise_off:
            return 0.0
        return self.levels * self.noise_scale * math.log(2 * self.T / xi)


class GroupingMechanism:
    """Sparse-vector grouping of a non-negative count stream.

    Consecutive inputs accumulate into a group; once the noisy group total
    crosses a noisy threshold, the group's noisy sum is released at that
    timestamp (all other timestamps release 0) and a fresh threshold is drawn.
    The released stream is epsilon-DP; prefix sums of it approximate the true
    prefix sums within (1 ± eta) plus the additive envelope below.
    """

    def __init__(
        self,
        T: int,
        epsilon: float,
        eta: float,
        xi: float,
        ctx: NoiseContext,
        threshold_offset: float | None = None,
    ) -> None:
        if epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {epsilon}")
        if not 0 < eta < 1:
            raise ValueError(f"eta must be in (0, 1), got {eta}")
        if not 0 < xi < 1:
            raise ValueError(f"xi must be in (0, 1), got {xi}")
        self.T = int(T)
        self.epsilon = float(epsilon)
        self.epsilon0 = self.epsilon / 2.0
        self.eta = float(eta)
        self.xi = float(xi)
        self._ctx = ctx
        # deterministic part of the threshold; overridable for statistical DP
        # tests only (privacy does not depend on this offset)
        if threshold_offset is None:
            threshold_offset = (
                (1.0 / self.eta + 1.0)
                * (7.0 / self.epsilon0)
                * math.log(3.0 * self.T / self.xi)
            )
        self.threshold_offset = float(threshold_offset)
        self.t = 0
        self.group_sum = 0.0
        self.released_prefix = 0.0
        self.tau = self._draw_threshold()

    def _draw_threshold(self) -> float:
        return self.threshold_offset + self._ctx.laplace(2.0 / self.epsilon0)

    def feed(self, c: float) -> float:
        """Ingest one non-negative count; returns the released value (often 0)."""
        if c < 0:
            raise ValueError(f"grouping mechanism requires non-negative inputs, got {c}")
        if self.t >= self.T:
            raise StateError(f"stream horizon T={self.T} exhausted")
        self.t += 1
        self.group_sum += c
        nu = self._ctx.laplace(4.0 / self.epsilon0)
        if nu + self.group_sum >= self.tau:
            released = self._ctx.laplace(1.0 / self.epsilon0) + self.group_sum
            self.group_sum = 0.0
            self.tau = self._draw_threshold()
            self.released_prefix += released
            return released
        return 0.0

    def current(self) -> float:
        """Running sum of released values: the continual-release output.

        Monotone only while every released value is non-negative; a released
        group total carries Laplace noise, so the output can dip when the
        latest release comes out negative.
        """
        return self.released_prefix

    @property
    def alpha(self) -> float:
        return 1.0 + self.eta

    def error_bound(self, xi: float | None = None) -> float:
        """Additive part of the (1 ± eta) envelope over every interval [l, r]."""
        xi = self.xi if xi is None else xi
        if self._ctx.noise_off:
            return 0.0
        return (
            (1.0 / self.eta + 4.0)
            * (7.0 / self.epsilon0)
            * math.log(3.0 * self.T / xi)
        )
