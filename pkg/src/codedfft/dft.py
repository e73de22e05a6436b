"""Reference DFT mathematics and the single-node two-step Cooley-Tukey split.

Sign convention: ``omega_N = exp(-2j*pi/N)`` (forward transform), which
matches :func:`numpy.fft.fft`.
"""

from dataclasses import dataclass

import numpy as np


def omega(N):
    return np.exp(-2j * np.pi / N)


def dft_matrix(N):
    """Dense ``N x N`` DFT matrix with entries ``omega_N**(j*k)``."""
    if N < 1:
        raise ValueError("DFT size must be >= 1")
    idx = np.arange(N)
    # reduce the exponent mod N first so large N keeps full accuracy
    return np.exp(-2j * np.pi * (np.outer(idx, idx) % N) / N)


def dft_direct(x):
    """O(N^2) matrix-vector DFT. This is the oracle every other path is checked against."""
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("dft_direct needs a non-empty 1-D vector")
    N = x.size
    if N <= 1024:
        return dft_matrix(N) @ x
    # same product, built a slab of rows at a time to bound memory
    idx = np.arange(N)
    out = np.empty(N, dtype=complex)
    for start in range(0, N, 256):
        k = idx[start:start + 256, None]
        out[start:start + 256] = np.exp(-2j * np.pi * ((k * idx[None, :]) % N) / N) @ x
    return out


@dataclass(frozen=True)
class DftPlan:
    """Problem geometry: ``N = N1 * N2`` points spread over ``K`` of ``P`` nodes."""

    N: int
    N1: int
    N2: int
    K: int
    P: int

    def __post_init__(self):
        if min(self.N, self.N1, self.N2, self.K, self.P) < 1:
            raise ValueError("all plan sizes must be positive")
        if self.N1 * self.N2 != self.N:
            raise ValueError(f"N1*N2 = {self.N1 * self.N2} != N = {self.N}")
        if self.N1 % self.K or self.N2 % self.K:
            raise ValueError(f"K={self.K} must divide N1={self.N1} and N2={self.N2}")
        if self.K >= self.P:
            raise ValueError(f"need K < P, got K={self.K}, P={self.P}")
        if self.K * self.K >= self.N:
            raise ValueError(f"need K^2 < N, got K={self.K}, N={self.N}")

    @classmethod
    def square(cls, N, K, P):
        """Split ``N`` as evenly as possible into ``N1 >= N2`` powers of two."""
        if N & (N - 1):
            raise ValueError("square() needs a power-of-two N")
        e = N.bit_length() - 1
        N1 = 1 << ((e + 1) // 2)
        return cls(N, N1, N // N1, K, P)

    @property
    def rows_per_node(self):
        return self.N1 // self.K

    @property
    def cols_per_node(self):
        return self.N2 // self.K


def vector_to_matrix(x, plan):
    """Fill ``X`` column-major: ``X[n1, n2] = x[n2*N1 + n1]``."""
    x = np.asarray(x, dtype=complex)
    if x.size != plan.N:
        raise ValueError(f"expected {plan.N} samples, got {x.size}")
    return x.reshape(plan.N2, plan.N1).T.copy()


def matrix_to_vector(Z, plan):
    """Read the output with ``k = k1*N2 + k2``, i.e. row-major."""
    Z = np.asarray(Z)
    if Z.shape != (plan.N1, plan.N2):
        raise ValueError(f"expected shape {(plan.N1, plan.N2)}, got {Z.shape}")
    return Z.reshape(-1).copy()


def twiddle_matrix(plan):
    n1 = np.arange(plan.N1)[:, None]
    k2 = np.arange(plan.N2)[None, :]
    return np.exp(-2j * np.pi * ((n1 * k2) % plan.N) / plan.N)


def hadamard(A, B):
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"Hadamard product needs equal shapes, got {A.shape} and {B.shape}")
    return A * B


def row_fft(block):
    """Length-N2 FFT of every row, i.e. ``block @ F_N2``."""
    return np.fft.fft(block, axis=1)


def col_fft(block):
    """Length-N1 FFT of every column, i.e. ``F_N1 @ block``."""
    return np.fft.fft(block, axis=0)


def cooley_tukey_reference(x, plan):
    """Single-node rearrange -> row FFTs -> twiddle -> column FFTs -> read out.

    The matrix products use explicit DFT matrices so that this path shares
    nothing with :mod:`numpy.fft`.
    """
    X = vector_to_matrix(x, plan)
    Y = X @ dft_matrix(plan.N2)
    Y = hadamard(twiddle_matrix(plan), Y)
    Z = dft_matrix(plan.N1) @ Y
    return matrix_to_vector(Z, plan)


def hadamard_order_gap(A, B, C):
    """Max-abs difference between ``A o (B C)`` and ``(A o B) C``."""
    return float(np.max(np.abs(hadamard(A, B @ C) - hadamard(A, B) @ C)))


WITNESS_SEED = 7


def twiddle_order_witness(seed=WITNESS_SEED):
    """Fixed-seed 4x4 triple for which the Hadamard product fails to commute
    with the matrix product; returns ``(A, B, C, gap)``."""
    rng = np.random.default_rng(seed)
    A, B, C = (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)) for _ in range(3))
    return A, B, C, hadamard_order_gap(A, B, C)
