"""alpha-beta communication cost: closed-form bounds and measured ledgers.

A ledger round is priced by its largest point-to-point message, so
``C2 = sum_i b_i`` with ``b_i`` the max symbols moved between two nodes in
round ``i``, and ``T = C1*alpha + C2*beta``.
"""

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CostParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")


@dataclass(frozen=True)
class RoundRecord:
    stage: str
    transfers: tuple  # (src, dst, symbols)
    one_port: bool = True

    @property
    def max_symbols(self):
        return max((t[2] for t in self.transfers), default=0)

    @property
    def volume(self):
        return sum(t[2] for t in self.transfers)


@dataclass
class CostLedger:
    rounds: list = field(default_factory=list)

    @property
    def C1(self):
        return len(self.rounds)

    @property
    def C2(self):
        return sum(r.max_symbols for r in self.rounds)

    @property
    def volume(self):
        """Total symbols moved; diagnostic only, not part of the cost."""
        return sum(r.volume for r in self.rounds)

    @property
    def one_port(self):
        return all(r.one_port for r in self.rounds)

    def time(self, params):
        return total_time(self, params)

    def extend(self, other):
        self.rounds.extend(other.rounds)
        return self

    def stages(self):
        seen = []
        for r in self.rounds:
            if r.stage not in seen:
                seen.append(r.stage)
        return seen

    def restricted(self, stage):
        return CostLedger([r for r in self.rounds if r.stage == stage])


def total_time(ledger, params):
    return ledger.C1 * params.alpha + ledger.C2 * params.beta


@dataclass(frozen=True)
class CostBound:
    C1: float
    C2: float
    kind: str = "exact"

    def __post_init__(self):
        if self.C1 < 0 or self.C2 < 0:
            raise ValueError("cost components must be non-negative")
        if self.kind not in ("lower", "upper", "exact"):
            raise ValueError(f"unknown bound kind {self.kind!r}")

    def time(self, params):
        return self.C1 * params.alpha + self.C2 * params.beta


def clog2(p):
    """``ceil(log2(p))`` computed exactly on integers."""
    if p < 1:
        raise ValueError("log of a non-positive count")
    return (p - 1).bit_length()


def all_to_all_bounds(p, n, regime="min-rounds"):
    if p < 1 or n < 0:
        raise ValueError("need p >= 1 and n >= 0")
    if p == 1:
        return CostBound(0, 0, "exact")
    if regime == "min-rounds":
        return CostBound(clog2(p), n / 2 * math.log2(p), "exact")
    if regime == "min-bandwidth":
        return CostBound(p - 1, (p - 1) * n / p, "exact")
    raise ValueError(f"unknown regime {regime!r}")


def transpose_cost(K, N):
    """One all-to-all over ``K`` nodes holding ``N/K`` symbols each.

    The bandwidth term is ``(N/(2K)) * ceil(log2 K)``, the all-to-all bound
    at ``n = N/K``.
    """
    if K < 1 or N % K:
        raise ValueError(f"K={K} must divide N={N}")
    L = clog2(K)
    return CostBound(L, N / (2 * K) * L, "exact")


def reduce_bounds(p, n):
    """``(lower, upper)``; the upper bound is the parameter-free factor-2 envelope."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if p == 1:
        return CostBound(0, 0, "lower"), CostBound(0, 0, "upper")
    L = clog2(p)
    return CostBound(L, n, "lower"), CostBound(2 * L, 2 * n, "upper")


def reduce_upper_time(p, n, params):
    """Pipelined reduce optimum ``(sqrt(ceil(log2 p)*alpha) + sqrt(n*beta))**2``."""
    if p <= 1:
        return 0.0
    return (math.sqrt(clog2(p) * params.alpha) + math.sqrt(n * params.beta)) ** 2


def multi_broadcast_bounds(p, r, n):
    if not 1 <= r <= p:
        raise ValueError(f"need 1 <= r <= p, got r={r}, p={p}")
    L = clog2(p)
    return CostBound(L, r * n, "lower"), CostBound(2 * L, 2 * r * n, "upper")


multi_reduce_bounds = multi_broadcast_bounds


def encoding_cost(P, K, N):
    if not 1 <= K < P:
        raise ValueError(f"need 1 <= K < P, got K={K}, P={P}")
    if N % K:
        raise ValueError(f"K={K} must divide N={N}")
    return CostBound(2 * clog2(K), 2 * (P - K) * N / K, "upper")


def crossover_threshold(K):
    return math.log2(K) / 2


def crossover_check(P, K):
    """True iff ``P - K < log2(K) / 2`` (strict)."""
    if not 1 <= K < P:
        raise ValueError(f"need 1 <= K < P, got K={K}, P={P}")
    return (P - K) < crossover_threshold(K)
