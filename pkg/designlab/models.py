from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from designlab.config import Config


# --- Dimensions and indices ---


class BipartiteDims(BaseModel):
    model_config = ConfigDict(frozen=True)

    d_S: int = Field(gt=0)
    d_E: int = Field(gt=0)

    @property
    def d(self) -> int:
        return self.d_S * self.d_E

    def swapped(self) -> BipartiteDims:
        return BipartiteDims(d_S=self.d_E, d_E=self.d_S)


class MonomialSpec(BaseModel):
    """
    Product of unitary entries: ``Π U[p, q]`` over ``plain`` times
    ``Π conj(U[r, s])`` over ``conj``.

    The degree is ``(k1, k2) = (len(conj), len(plain))``.
    """

    model_config = ConfigDict(frozen=True)

    plain: Tuple[Tuple[int, int], ...] = ()
    conj: Tuple[Tuple[int, int], ...] = ()

    @property
    def degree(self) -> Tuple[int, int]:
        return len(self.conj), len(self.plain)

    @property
    def balanced(self) -> bool:
        return len(self.conj) == len(self.plain)

    @property
    def k(self) -> int:
        return max(self.degree)

    def max_index(self) -> int:
        indices = [i for pair in (*self.plain, *self.conj) for i in pair]
        return max(indices, default=-1)

    @classmethod
    def abs_power(cls, p: int, q: int, k: int) -> MonomialSpec:
        """``|U[p, q]|^(2k)``."""
        return cls(plain=((p, q),) * k, conj=((p, q),) * k)


class RngStream(BaseModel):
    """A (seed, stream) pair; identical pairs reproduce identical draws."""

    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=Config.SEED_LIMIT)
    stream: int = Field(default=0, ge=0, lt=2**64)

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(sequence))

    def derive(self, index: int) -> RngStream:
        """Child stream for batch ``index`` (splitmix64 mix of stream and index)."""
        z = (self.stream * 0x9E3779B97F4A7C15 + index + 1) & 0xFFFFFFFFFFFFFFFF
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
        return RngStream(seed=self.seed, stream=z ^ (z >> 31))


# --- Designs and certification ---


class DesignSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    d: int = Field(gt=0)
    k: int = Field(gt=0)
    eps: float = Field(gt=0)

    @property
    def threshold(self) -> float:
        """``ε / d^k``, the per-monomial tolerance."""
        return float(self.eps / float(self.d) ** self.k)


class TpeSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    d: int = Field(gt=0)
    D: int = Field(gt=0)
    lam: float = Field(ge=0, le=1)
    k: int = Field(gt=0)


class CertReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True, serialize_by_alias=True)

    spec: DesignSpec
    max_deviation: float
    worst_monomial: Optional[MonomialSpec] = None
    mode: Literal["exhaustive", "sampled"]
    n_samples: Optional[int] = None  # Monte Carlo draws of the ensemble
    n_monomials: int = 0
    passed: bool = Field(alias="pass")
    se: Optional[float] = None  # standard error at the worst monomial
    threshold: float
    provenance: Optional[str] = None
    seed: Optional[int] = None
    config_hash: Optional[str] = None
    version: str = Config.VERSION


class EnsembleSpec(BaseModel):
    """A builtin ensemble name (``haar``, ``pauli2``, ``clifford1`` ...) or JSON path."""

    name: str = "haar"
    d: Optional[int] = Field(default=None, gt=0)
    depth: Optional[int] = Field(default=None, ge=0)
    iterations: int = Field(default=1, ge=1)
    samples: Optional[int] = Field(default=None, gt=0)  # sampled Clifford size


class CertifyRequest(BaseModel):
    ensemble: EnsembleSpec
    k: int = Field(gt=0)
    eps: float = Field(gt=0)
    strategy: Literal["auto", "exhaustive", "random-monomials"] = "auto"
    n_monomials: int = Field(default=1000, gt=0)
    samples: int = Field(default=Config.MC_SAMPLES, ge=Config.MIN_SAMPLES)
    seed: Optional[int] = Field(default=None, ge=0, lt=Config.SEED_LIMIT)


# --- Bounds ---


class TailProfile(BaseModel):
    """``P(|X - μ| ≥ δ) ≤ C exp(-a δ²)``, optionally shifted by ``eta_shift``."""

    model_config = ConfigDict(frozen=True)

    C: float = Field(ge=0)
    a: float = Field(gt=0)
    mu: float = 0.0
    eta_shift: float = Field(default=0.0, ge=0)


class PolynomialSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    K: int = Field(gt=0)
    alpha: float = Field(gt=0)


class LipschitzFn(BaseModel):
    model_config = ConfigDict(frozen=True)

    eta: float = Field(gt=0)


class MomentBound(BaseModel):
    value: float
    log_value: float  # natural log
    loose_value: Optional[float] = None


class BoundResult(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    name: str
    inputs: Dict[str, Any] = Field(default_factory=dict)
    bound: float
    raw: float
    log2_bound: float
    clamped: bool
    warnings: List[str] = Field(default_factory=list)
    extras: Dict[str, Any] = Field(default_factory=dict)


# --- Experiments ---


class ConstraintSpec(BaseModel):
    d_S: int = Field(gt=0)
    d_E: int = Field(gt=0)
    d_R: Optional[int] = Field(default=None, gt=0)
    embedding: Literal["first-basis", "random-subspace", "energy-window", "explicit"] = (
        "first-basis"
    )
    seed: Optional[int] = Field(default=None, ge=0, lt=Config.SEED_LIMIT)
    energies: Optional[List[float]] = None  # diagonal of H, length d_S*d_E
    window: Optional[Tuple[float, float]] = None
    columns: Optional[List[List[Tuple[float, float]]]] = None  # [re, im] per entry

    @property
    def d(self) -> int:
        return self.d_S * self.d_E

    @property
    def dims(self) -> BipartiteDims:
        return BipartiteDims(d_S=self.d_S, d_E=self.d_E)

    @model_validator(mode="after")
    def _check_subspace(self):
        if self.embedding == "energy-window":
            if self.energies is None or self.window is None:
                raise ValueError("energy-window embedding needs energies and window")
            if len(self.energies) != self.d:
                raise ValueError(f"energies must have length {self.d}")
            low, high = self.window
            selected = sum(1 for e in self.energies if low <= e <= high)
            if selected == 0:
                raise ValueError("energy window selects no basis states")
            if self.d_R is not None and self.d_R != selected:
                raise ValueError(f"d_R={self.d_R} but the window selects {selected}")
            self.d_R = selected
        elif self.embedding == "explicit":
            if not self.columns:
                raise ValueError("explicit embedding needs columns")
            if self.d_R is None:
                self.d_R = len(self.columns)
            if len(self.columns) != self.d_R:
                raise ValueError(f"expected {self.d_R} columns, got {len(self.columns)}")
        elif self.embedding == "random-subspace" and self.seed is None:
            raise ValueError("random-subspace embedding needs a seed")
        if self.d_R is None:
            raise ValueError("d_R is required for this embedding")
        if self.d_R > self.d:
            raise ValueError(f"d_R={self.d_R} exceeds d_S*d_E={self.d}")
        return self


ExperimentKind = Literal["entropy", "statmech", "geoment", "tailcurve", "overlap"]


class ExperimentConfig(BaseModel):
    kind: ExperimentKind
    ensemble: EnsembleSpec = Field(default_factory=EnsembleSpec)
    dims: Optional[BipartiteDims] = None
    constraint: Optional[ConstraintSpec] = None
    n_qubits: Optional[int] = Field(default=None, gt=0)
    samples: int = Field(default=Config.MC_SAMPLES, ge=Config.MIN_SAMPLES)
    grid: List[float]
    seed: Optional[int] = Field(default=None, ge=0, lt=Config.SEED_LIMIT)
    output_dir: Optional[str] = None
    batch_size: int = Field(default=Config.MC_BATCH, gt=0)

    # Design claim the analytic bound is evaluated for
    design_k: Optional[int] = Field(default=None, gt=0)
    design_eps: float = Field(default=0.0, ge=0)
    m: Optional[int] = Field(default=None, gt=0)

    restarts: int = Field(default=Config.GEOM_RESTARTS, gt=0)
    initial_state: Optional[List[Tuple[float, float]]] = None  # [re, im] amplitudes

    @field_validator("grid")
    @classmethod
    def _sorted_grid(cls, grid: List[float]) -> List[float]:
        if not grid:
            raise ValueError("grid must not be empty")
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be sorted ascending")
        return grid

    @model_validator(mode="after")
    def _check_dims(self):
        if self.kind in ("entropy", "tailcurve", "overlap") and self.dims is None:
            raise ValueError(f"{self.kind} experiment needs dims")
        if self.kind == "statmech" and self.constraint is None:
            raise ValueError("statmech experiment needs a constraint")
        if self.kind == "geoment" and self.n_qubits is None:
            raise ValueError("geoment experiment needs n_qubits")
        return self


class TailCurve(BaseModel):
    """
    Empirical tail against an analytic bound on a threshold grid.

    ``passed`` holds when no entry of ``point_pass`` is False.
    """

    model_config = ConfigDict(populate_by_name=True, serialize_by_alias=True)

    kind: str
    grid: List[float]
    empirical: List[float]
    wilson_upper: List[float]
    bound: List[float]
    log2_bound: List[float]
    point_pass: List[Optional[bool]] = Field(
        description=(
            "True when wilson_upper <= bound, False when it exceeds the bound. "
            "None when the bound is vacuous (>= 1), or when no sample reached the "
            "threshold and the bound lies below the zero-count Wilson floor: such "
            "points are unresolved, cannot fail the run and add a warning."
        )
    )
    passed: bool = Field(alias="pass")
    n_samples: int
    seed: Optional[int] = None
    ensemble: Optional[str] = None
    config_hash: Optional[str] = None
    version: str = Config.VERSION
    stats: Dict[str, float] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)


# --- Ledger ---


class RunSummary(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    id: int
    command: str
    kind: Optional[str] = None
    seed: Optional[int] = None
    config_hash: Optional[str] = None
    version: str
    passed: Optional[bool] = None
    csv_path: Optional[str] = None
    json_path: Optional[str] = None
    time_created: int
