"""
Haar sampling and the exact / Monte Carlo Haar moment oracles.

Every design candidate is compared against the functions here.  Moment
operators use the layout ``M_k = E[U^{⊗k} ⊗ conj(U)^{⊗k}]``: the entry at
row ``(p_1..p_k, r_1..r_k)`` and column ``(q_1..q_k, s_1..s_k)`` is the
expectation of ``Π U[p_i, q_i] Π conj(U[r_i, s_i])``.  The same matrix acting
on a row-major ``vec(X)`` is the k-fold twirl of ``X``.
"""

from __future__ import annotations

import itertools
import math

from typing import NamedTuple, Union

import numpy as np

from numpy.typing import ArrayLike

from designlab.config import Config
from designlab.errors import DimensionError, PreconditionError
from designlab.models import BipartiteDims, MonomialSpec, RngStream
from designlab.numkit import (
    ComplexMatrix,
    DensityMatrix,
    check_entries,
    purity,
    swap_operator,
)


RngLike = Union[RngStream, np.random.Generator, int, None]


class MonomialEstimate(NamedTuple):
    value: complex
    se: float  # 0 for exact values
    samples: int  # 0 for exact values


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_haar_batch(d: int, n: int, rng: RngLike) -> np.ndarray:
    """``n`` Haar unitaries of size ``d``, shape ``(n, d, d)``."""
    if d < 1:
        raise DimensionError(f"d must be positive, got {d}")
    gen = as_generator(rng)
    ginibre = (
        gen.standard_normal((n, d, d)) + 1j * gen.standard_normal((n, d, d))
    ) / np.sqrt(2.0)
    q, r = np.linalg.qr(ginibre)
    diagonal = np.diagonal(r, axis1=-2, axis2=-1)
    # QR leaves arbitrary phases on R's diagonal; pushing them into Q makes it Haar
    q *= (diagonal / np.abs(diagonal))[:, None, :]
    return q


def sample_haar(d: int, rng: RngLike) -> ComplexMatrix:
    return sample_haar_batch(d, 1, rng)[0]


def sample_haar_states(d: int, n: int, rng: RngLike) -> np.ndarray:
    """``n`` uniformly random kets, shape ``(n, d)``."""
    gen = as_generator(rng)
    kets = gen.standard_normal((n, d)) + 1j * gen.standard_normal((n, d))
    return kets / np.linalg.norm(kets, axis=1, keepdims=True)


def sample_haar_state(d: int, rng: RngLike) -> np.ndarray:
    return sample_haar_states(d, 1, rng)[0]


# ---------------------------------------------------------------------------
# Exact twirls
# ---------------------------------------------------------------------------


def haar_twirl_k1(rho: ArrayLike) -> ComplexMatrix:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"twirl input must be square, got {rho.shape}")
    d = rho.shape[0]
    return np.trace(rho) * np.eye(d, dtype=np.complex128) / d


def _k2_coefficients(b0: complex, b1: complex, d: int) -> tuple[complex, complex]:
    """Coefficients of ``I`` and ``F`` given ``tr X`` and ``tr FX``."""
    if d == 1:
        return b0, 0.0
    det = float(d**4 - d**2)
    return (d * d * b0 - d * b1) / det, (d * d * b1 - d * b0) / det


def haar_twirl_k2(x: ArrayLike) -> ComplexMatrix:
    """Exact ``E_H[(U⊗U) X (U⊗U)†]`` for any ``d²×d²`` matrix ``X``."""
    x = np.asarray(x, dtype=np.complex128)
    d = math.isqrt(x.shape[0])
    if x.ndim != 2 or x.shape != (d * d, d * d):
        raise DimensionError(f"k=2 twirl needs a d²×d² matrix, got {x.shape}")
    b0 = np.trace(x)
    b1 = np.einsum("jiij->", x.reshape(d, d, d, d))
    c0, c1 = _k2_coefficients(b0, b1, d)
    return c0 * np.eye(d * d, dtype=np.complex128) + c1 * swap_operator(d)


def haar_twirl_k2_pure(rho: DensityMatrix) -> ComplexMatrix:
    """``E_H[UρU† ⊗ UρU†] = (I + F) / (d(d+1))`` for pure ``ρ``."""
    if purity(rho) < 1.0 - Config.PURE_ATOL:
        raise PreconditionError("k=2 pure-state twirl needs a pure input")
    d = rho.dim
    return (np.eye(d * d, dtype=np.complex128) + swap_operator(d)) / (d * (d + 1))


def sym_dim(d: int, k: int) -> int:
    """Dimension of the symmetric subspace of ``(C^d)^{⊗k}``."""
    return math.comb(k + d - 1, d - 1)


def permutation_operator(d: int, perm: tuple[int, ...]) -> ComplexMatrix:
    """Operator sending tensor factor ``i`` to position ``perm[i]``."""
    k = len(perm)
    size = d**k
    check_entries(size, size)
    identity = np.eye(size, dtype=np.complex128).reshape((d,) * k + (size,))
    inverse = tuple(np.argsort(perm))
    return identity.transpose(inverse + (k,)).reshape(size, size)


def sym_projector(d: int, k: int) -> ComplexMatrix:
    size = d**k
    check_entries(size, size)
    projector = np.zeros((size, size), dtype=np.complex128)
    for perm in itertools.permutations(range(k)):
        projector += permutation_operator(d, perm)
    return projector / math.factorial(k)


def haar_moment_operator(d: int, k: int) -> ComplexMatrix:
    """``E_H[U^{⊗k} ⊗ conj(U)^{⊗k}]`` for ``k ≤ 2``."""
    if k == 0:
        return np.ones((1, 1), dtype=np.complex128)
    if k == 1:
        check_entries(d * d, d * d)
        vec_identity = np.eye(d, dtype=np.complex128).reshape(-1)
        return np.outer(vec_identity, vec_identity) / d
    if k == 2:
        check_entries(d**4, d**4)
        identity = np.eye(d * d, dtype=np.complex128)
        basis = np.stack([identity.reshape(-1), swap_operator(d).reshape(-1)], axis=1)
        gram = np.array([[d**2, d], [d, d**2]], dtype=float)
        return basis @ np.linalg.pinv(gram) @ basis.T
    raise PreconditionError(f"exact Haar moments are available for k ≤ 2, got k={k}")


# ---------------------------------------------------------------------------
# Monomials
# ---------------------------------------------------------------------------


def _exact_entry(monomial: MonomialSpec, d: int) -> float:
    """Closed-form Haar expectation of a balanced monomial of degree ≤ 2."""
    k = len(monomial.plain)
    if k == 0:
        return 1.0
    p = [pq[0] for pq in monomial.plain]
    q = [pq[1] for pq in monomial.plain]
    r = [rs[0] for rs in monomial.conj]
    s = [rs[1] for rs in monomial.conj]
    if k == 1:
        return float(p[0] == r[0] and q[0] == s[0]) / d
    rows = np.array([p[0] == r[0] and p[1] == r[1], p[0] == r[1] and p[1] == r[0]])
    cols = np.array([q[0] == s[0] and q[1] == s[1], q[0] == s[1] and q[1] == s[0]])
    gram = np.array([[d**2, d], [d, d**2]], dtype=float)
    return float(rows.astype(float) @ np.linalg.pinv(gram) @ cols.astype(float))


def monomial_values(unitaries: np.ndarray, monomial: MonomialSpec) -> np.ndarray:
    """Value of the monomial on each unitary of a ``(n, d, d)`` stack."""
    values = np.ones(unitaries.shape[0], dtype=np.complex128)
    for p, q in monomial.plain:
        values *= unitaries[:, p, q]
    for r, s in monomial.conj:
        values *= np.conj(unitaries[:, r, s])
    return values


def mean_with_se(values: np.ndarray) -> tuple[complex, float]:
    n = values.size
    if n < 2:
        return complex(values.mean()), float("inf")
    se = np.sqrt(np.var(values.real, ddof=1) + np.var(values.imag, ddof=1))
    return complex(values.mean()), float(se / np.sqrt(n))


def haar_monomial(
    monomial: MonomialSpec,
    d: int,
    mode: str = "exact",
    samples: int = Config.MC_SAMPLES,
    rng: RngLike = None,
    batch_size: int = Config.MC_BATCH,
) -> MonomialEstimate:
    """Haar expectation of a monomial, exactly (``k ≤ 2``) or by Monte Carlo."""
    if monomial.max_index() >= d:
        raise DimensionError(f"monomial index out of range for d={d}")
    if mode == "exact":
        if not monomial.balanced:
            raise PreconditionError("exact Haar moments need a balanced monomial")
        if monomial.k > 2:
            raise PreconditionError(f"exact mode covers degree ≤ 2, got {monomial.k}")
        return MonomialEstimate(complex(_exact_entry(monomial, d)), 0.0, 0)
    if mode != "mc":
        raise ValueError(f"mode must be 'exact' or 'mc', got {mode!r}")

    chunks = [
        monomial_values(sample_haar_batch(d, size, gen), monomial)
        for size, gen in iter_batches(samples, rng, batch_size)
    ]
    value, se = mean_with_se(np.concatenate(chunks))
    return MonomialEstimate(value, se, samples)


def expected_purity(dims: BipartiteDims) -> float:
    """Haar average of ``tr ψ_S²`` for a random pure state on ``S ⊗ E``."""
    return (dims.d_S + dims.d_E) / (dims.d + 1)


def moment_row_col(monomial: MonomialSpec, d: int) -> tuple[int, int]:
    """Position of a balanced monomial inside ``haar_moment_operator(d, k)``."""
    p = [pq[0] for pq in monomial.plain] + [rs[0] for rs in monomial.conj]
    q = [pq[1] for pq in monomial.plain] + [rs[1] for rs in monomial.conj]
    row = col = 0
    for pi, qi in zip(p, q):
        row = row * d + pi
        col = col * d + qi
    return row, col


def iter_batches(samples: int, rng: RngLike, batch_size: int = Config.MC_BATCH):
    """
    Yield ``(size, generator)`` pairs covering ``samples`` draws.

    With an ``RngStream`` each batch gets its own derived stream, so the draws
    depend only on the seed and the batch size, never on who consumes them.
    """
    shared = None if isinstance(rng, RngStream) else as_generator(rng)
    for index, start in enumerate(range(0, samples, batch_size)):
        size = min(batch_size, samples - start)
        yield size, shared if shared is not None else rng.derive(index).generator()
