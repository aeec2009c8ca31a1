"""
Dense complex linear algebra and quantum-state primitives.

Every other module builds on these.  States are plain numpy arrays wrapped in
small frozen pydantic models that check the quantum-state invariants once, at
construction; a failed check surfaces as pydantic's ``ValidationError``.  Hot
Monte Carlo paths work on stacked arrays instead (the ``batch_*`` helpers at the
bottom) and never build a model per sample.

All logarithms are base 2.
"""

from __future__ import annotations

from typing import Literal, Sequence

import numpy as np

from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from designlab.config import Config
from designlab.errors import (
    BudgetExceeded,
    ConvergenceError,
    DimensionError,
    InvariantViolation,
)
from designlab.models import BipartiteDims


ComplexMatrix = NDArray[np.complex128]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.complex128, copy=True)
    array.setflags(write=False)
    return array


def as_matrix(value: ArrayLike) -> ComplexMatrix:
    """Coerce to a finite 2-D complex array."""
    matrix = np.asarray(value, dtype=np.complex128)
    if matrix.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvariantViolation("matrix has non-finite entries")
    return matrix


def check_entries(rows: int, cols: int) -> None:
    if rows * cols > Config.MAX_ENTRIES:
        raise BudgetExceeded(
            f"{rows}x{cols} matrix exceeds the {Config.MAX_ENTRIES} entry cap"
        )


# ---------------------------------------------------------------------------
# State types
# ---------------------------------------------------------------------------


class PureState(BaseModel):
    """Normalized ket."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    amplitudes: np.ndarray

    @field_validator("amplitudes", mode="before")
    @classmethod
    def _as_vector(cls, value):
        vector = np.asarray(value, dtype=np.complex128).reshape(-1)
        if vector.size > Config.MAX_STATE_DIM:
            raise BudgetExceeded(f"state dimension {vector.size} above cap")
        return _frozen(vector)

    @model_validator(mode="after")
    def _check_norm(self):
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > Config.STATE_ATOL:
            raise ValueError(f"state norm {norm!r} is not 1")
        return self

    @property
    def dim(self) -> int:
        return int(self.amplitudes.size)

    def density(self) -> DensityMatrix:
        return DensityMatrix.model_construct(
            matrix=_frozen(np.outer(self.amplitudes, self.amplitudes.conj()))
        )


class DensityMatrix(BaseModel):
    """Hermitian, unit-trace, positive semidefinite matrix."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray

    @field_validator("matrix", mode="before")
    @classmethod
    def _as_square(cls, value):
        matrix = as_matrix(value)
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"density matrix must be square, got {matrix.shape}")
        return _frozen(matrix)

    @model_validator(mode="after")
    def _check_state(self):
        rho = self.matrix
        if np.max(np.abs(rho - rho.conj().T), initial=0.0) > Config.STATE_ATOL:
            raise ValueError("density matrix is not Hermitian")
        trace = np.trace(rho).real
        if abs(trace - 1.0) > Config.STATE_ATOL:
            raise ValueError(f"density matrix trace {trace!r} is not 1")
        smallest = float(np.linalg.eigvalsh(rho)[0])
        if smallest < -Config.EIGEN_CLIP:
            raise ValueError(f"density matrix has eigenvalue {smallest!r}")
        return self

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])


def pure_state(amplitudes: ArrayLike, normalize: bool = False) -> PureState:
    vector = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
    if normalize:
        vector = vector / np.linalg.norm(vector)
    return PureState(amplitudes=vector)


def density_matrix(matrix: ArrayLike) -> DensityMatrix:
    return DensityMatrix(matrix=matrix)


def basis_state(index: int, dim: int) -> PureState:
    vector = np.zeros(dim, dtype=np.complex128)
    vector[index] = 1.0
    return PureState(amplitudes=vector)


def product_state(kets: Sequence[ArrayLike]) -> PureState:
    vector = np.ones(1, dtype=np.complex128)
    for factor in kets:
        vector = np.kron(vector, np.asarray(factor, dtype=np.complex128))
    return pure_state(vector, normalize=True)


def bell_state() -> PureState:
    return pure_state([1, 0, 0, 1], normalize=True)


def ghz_state(n: int) -> PureState:
    vector = np.zeros(2**n, dtype=np.complex128)
    vector[0] = vector[-1] = 1.0
    return pure_state(vector, normalize=True)


def maximally_mixed(dim: int) -> DensityMatrix:
    return DensityMatrix.model_construct(
        matrix=_frozen(np.eye(dim, dtype=np.complex128) / dim)
    )


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def kron(a: ArrayLike, b: ArrayLike) -> ComplexMatrix:
    """Tensor product ``a ⊗ b``."""
    a, b = as_matrix(a), as_matrix(b)
    check_entries(a.shape[0] * b.shape[0], a.shape[1] * b.shape[1])
    return np.kron(a, b)


def partial_trace(
    rho: DensityMatrix, dims: BipartiteDims, keep: Literal["S", "E"] = "S"
) -> DensityMatrix:
    """Reduced state on S (tracing out E) or on E (tracing out S)."""
    if rho.dim != dims.d:
        raise DimensionError(f"state dim {rho.dim} != d_S*d_E = {dims.d}")
    tensor = rho.matrix.reshape(dims.d_S, dims.d_E, dims.d_S, dims.d_E)
    if keep == "S":
        reduced = np.einsum("iaja->ij", tensor)
    elif keep == "E":
        reduced = np.einsum("aiaj->ij", tensor)
    else:
        raise ValueError(f"keep must be 'S' or 'E', got {keep!r}")
    reduced = 0.5 * (reduced + reduced.conj().T)
    return DensityMatrix.model_construct(matrix=_frozen(reduced))


def purity(rho: DensityMatrix) -> float:
    """``tr ρ²``, the squared Frobenius norm."""
    return float(np.vdot(rho.matrix, rho.matrix).real)


def entropy_from_eigenvalues(eigenvalues: ArrayLike) -> float:
    """``-Σ λ log₂ λ`` with eigenvalues at or below the clip treated as zero."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if np.any(eigenvalues < -Config.EIGEN_CLIP):
        raise InvariantViolation(f"negative eigenvalue {eigenvalues.min()!r}")
    positive = eigenvalues[eigenvalues > Config.EIGEN_CLIP]
    return float(max(0.0, -np.sum(positive * np.log2(positive))))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    try:
        eigenvalues = np.linalg.eigvalsh(rho.matrix)
    except np.linalg.LinAlgError as e:
        raise ConvergenceError(f"eigensolver failed: {e}") from e
    return min(entropy_from_eigenvalues(eigenvalues), float(np.log2(rho.dim)))


def renyi2_entropy(rho: DensityMatrix) -> float:
    return float(-np.log2(purity(rho)))


def hs_norm(a: ArrayLike) -> float:
    """Hilbert-Schmidt (Frobenius) norm ``‖A‖₂``."""
    return float(np.linalg.norm(np.asarray(a), "fro"))


def trace_norm(a: ArrayLike) -> float:
    """Sum of singular values ``‖A‖₁``."""
    return float(np.sum(np.linalg.svd(as_matrix(a), compute_uv=False)))


def operator_norm(a: ArrayLike) -> float:
    """Largest singular value ``‖A‖_∞``."""
    return float(np.linalg.norm(as_matrix(a), 2))


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """``‖ρ − σ‖₁`` (no factor 1/2), in ``[0, 2]``."""
    if rho.dim != sigma.dim:
        raise DimensionError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    return trace_norm(rho.matrix - sigma.matrix)


def swap_operator(d: int) -> ComplexMatrix:
    """``F|i⟩|j⟩ = |j⟩|i⟩`` on ``C^d ⊗ C^d``."""
    check_entries(d * d, d * d)
    i, j = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    swap = np.zeros((d * d, d * d), dtype=np.complex128)
    swap[(j * d + i).ravel(), (i * d + j).ravel()] = 1.0
    return swap


def unitarity_residual(u: ArrayLike) -> float:
    """``‖U†U − I‖₂``."""
    u = as_matrix(u)
    return hs_norm(u.conj().T @ u - np.eye(u.shape[1]))


def is_unitary(u: ArrayLike, atol: float = Config.UNITARY_ATOL) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and unitarity_residual(u) < atol


# ---------------------------------------------------------------------------
# Batched paths (stacks of states, leading axis = sample)
# ---------------------------------------------------------------------------


def batch_reduced_states(kets: np.ndarray, dims: BipartiteDims) -> np.ndarray:
    """``tr_E |ψ⟩⟨ψ|`` for a stack of kets of shape ``(n, d_S*d_E)``."""
    if kets.shape[-1] != dims.d:
        raise DimensionError(f"ket dim {kets.shape[-1]} != {dims.d}")
    blocks = kets.reshape(-1, dims.d_S, dims.d_E)
    return np.einsum("nia,nja->nij", blocks, blocks.conj())


def batch_purities(rhos: np.ndarray) -> np.ndarray:
    return np.einsum("nij,nij->n", rhos, rhos.conj()).real


def batch_entropies(rhos: np.ndarray) -> np.ndarray:
    eigenvalues = np.linalg.eigvalsh(rhos)
    if np.any(eigenvalues < -Config.EIGEN_CLIP):
        raise InvariantViolation(f"negative eigenvalue {eigenvalues.min()!r}")
    clipped = np.where(eigenvalues > Config.EIGEN_CLIP, eigenvalues, 1.0)
    return np.maximum(0.0, -np.sum(clipped * np.log2(clipped), axis=-1))


def batch_trace_distances(rhos: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """``‖ρ_n − σ‖₁`` for Hermitian ``ρ_n`` and ``σ``."""
    return np.sum(np.abs(np.linalg.eigvalsh(rhos - sigma[None, :, :])), axis=-1)


def batch_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-sample ``a_n ⊗ b_n`` for stacks of square matrices."""
    n, da, db = a.shape[0], a.shape[1], b.shape[1]
    return np.einsum("nij,nkl->nikjl", a, b).reshape(n, da * db, da * db)
