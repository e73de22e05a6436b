"""Systematic (P, K) MDS codes over complex scalars.

The generator is ``[I_K | parity]`` where column ``j`` equals the Vandermonde
column at ``z_j = exp(2j*pi*j/P)`` rewritten in the basis of the first ``K``
columns. Those coefficients are Lagrange basis polynomials on ``z_0..z_{K-1}``
evaluated at ``z_j``; computing them as products avoids inverting an
ill-conditioned Vandermonde block when ``K`` is large.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

MINOR_TOL = 1e-8
# exhaustive determinant enumeration is used up to this many K-subsets
DIRECT_MINOR_LIMIT = 5000
# closed-form enumeration over erased sets up to this many (P-K)-subsets
ERASED_SET_LIMIT = 300_000


class CodeConstructionError(ValueError):
    pass


class SingularSurvivorSet(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class MdsCodeSpec:
    P: int
    K: int
    generator: np.ndarray = field(repr=False)
    kind: str = "vandermonde"

    @property
    def parity(self):
        return self.generator[:, self.K:]

    def survivor_matrix(self, indices):
        return self.generator[:, list(indices)]


@dataclass(frozen=True)
class BlockCode:
    spec: MdsCodeSpec
    block: int = 1

    def expanded_generator(self):
        return np.kron(self.spec.generator, np.eye(self.block))


def _unit_points(P):
    return np.exp(2j * np.pi * np.arange(P) / P)


def _lagrange_parity(P, K):
    z = _unit_points(P)
    base = z[:K]
    out = np.empty((K, P - K), dtype=complex)
    for col, zj in enumerate(z[K:]):
        for i in range(K):
            others = np.delete(base, i)
            out[i, col] = np.prod((zj - others) / (base[i] - others))
    return out


def _pair_product(points):
    d = 1.0
    for a, b in itertools.combinations(points, 2):
        d *= abs(a - b)
    return d


def min_minor_modulus(spec):
    """Smallest ``|det|`` over all K-column submatrices, or ``None`` when the
    enumeration would be too large.

    For the unit-circle construction ``|det G_S|`` equals the product of
    pairwise distances of the erased points divided by the same product for
    the default parity points, which needs only ``C(P, P-K)`` small products.
    """
    P, K = spec.P, spec.K
    if math.comb(P, K) <= DIRECT_MINOR_LIMIT:
        return min(abs(np.linalg.det(spec.survivor_matrix(S))) for S in itertools.combinations(range(P), K))
    if spec.kind != "vandermonde" or math.comb(P, P - K) > ERASED_SET_LIMIT:
        return None
    z = _unit_points(P)
    ref = _pair_product(z[K:])
    return min(_pair_product(z[list(E)]) for E in itertools.combinations(range(P), P - K)) / ref


def _check_mds(spec):
    m = min_minor_modulus(spec)
    if m is None:
        log.info("skipping exhaustive minor check for (P=%d, K=%d)", spec.P, spec.K)
    elif m <= MINOR_TOL:
        raise CodeConstructionError(f"({spec.P},{spec.K}) code has a singular minor (|det|={m:.3g})")
    return spec


def make_systematic_mds(P, K, parity="vandermonde"):
    if not 1 <= K < P:
        raise ValueError(f"need 1 <= K < P, got K={K}, P={P}")
    if parity == "checksum":
        if P != K + 1:
            raise ValueError("checksum parity only defines a (K+1, K) code")
        return make_checksum_code(K)
    if parity != "vandermonde":
        raise ValueError(f"unknown parity construction {parity!r}")
    G = np.hstack([np.eye(K, dtype=complex), _lagrange_parity(P, K)])
    return _check_mds(MdsCodeSpec(P, K, G, "vandermonde"))


def make_checksum_code(K):
    if K < 1:
        raise ValueError("K must be >= 1")
    G = np.hstack([np.eye(K, dtype=complex), np.ones((K, 1), dtype=complex)])
    return MdsCodeSpec(K + 1, K, G, "checksum")


def encode_blocks(code, data):
    """Return the ``P`` coded blocks; the first ``K`` are the inputs themselves."""
    spec = code.spec if isinstance(code, BlockCode) else code
    if len(data) != spec.K:
        raise ValueError(f"expected {spec.K} data blocks, got {len(data)}")
    data = [np.asarray(d) for d in data]
    shape = data[0].shape
    if any(d.shape != shape for d in data):
        raise ValueError("data blocks must share one shape")
    out = list(data)
    for j in range(spec.P - spec.K):
        acc = np.zeros(shape, dtype=complex)
        for i, d in enumerate(data):
            coef = spec.parity[i, j]
            if coef != 0:
                acc += coef * d
        out.append(acc)
    return out


def decode_from_surviving(code, surviving):
    """Recover the ``K`` data blocks from exactly ``K`` ``(node index, block)`` pairs."""
    spec = code.spec if isinstance(code, BlockCode) else code
    idx = [int(i) for i, _ in surviving]
    if len(idx) != spec.K or len(set(idx)) != spec.K:
        raise ValueError(f"need exactly {spec.K} distinct survivors, got {idx}")
    if any(not 0 <= i < spec.P for i in idx):
        raise ValueError(f"survivor index out of range: {idx}")
    blocks = [np.asarray(b) for _, b in surviving]
    if all(i < spec.K for i in idx):
        by_idx = dict(zip(idx, blocks))
        return [by_idx[i] for i in range(spec.K)]
    shape = blocks[0].shape
    A = spec.survivor_matrix(idx).T
    B = np.stack([b.reshape(-1) for b in blocks])
    try:
        D = np.linalg.solve(A, B)
    except np.linalg.LinAlgError as exc:
        raise SingularSurvivorSet(f"survivor set {idx} is singular") from exc
    return [D[i].reshape(shape) for i in range(spec.K)]
