"""
Unitary ensembles: explicit weighted sets, generator-form samplers and TPE iteration.

An ensemble is either *explicit* (a stack of unitaries with weights) or a
*generator* (a picklable sampler called with a batch size and a numpy
Generator).  Iterating an ensemble never materializes the ``S^t`` products;
the iterated sampler composes draws on the fly, and ``certify`` uses the
base ensemble's moment operator raised to the ``t``-th power when the base is
explicit.
"""

from __future__ import annotations

import functools
import itertools
import json
import logging
import math
import re

from pathlib import Path
from typing import Any, Dict, List, Literal, NamedTuple, Optional, Tuple

import numpy as np

from pydantic import BaseModel, ConfigDict, Field, model_validator
from qiskit.quantum_info import random_clifford

from designlab.config import Config
from designlab.errors import (
    BudgetExceeded,
    DimensionError,
    PreconditionError,
    UnknownNameError,
)
from designlab.haar import RngLike, as_generator, sample_haar_batch
from designlab.models import EnsembleSpec
from designlab.numkit import batch_kron


logger = logging.getLogger(__name__)

Provenance = Literal[
    "pauli",
    "clifford",
    "random-circuit",
    "iterated",
    "custom",
    "haar",
    "local-haar",
    "identity",
]

PAULIS = (
    np.eye(2, dtype=np.complex128),
    np.array([[0, 1], [1, 0]], dtype=np.complex128),
    np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    np.array([[1, 0], [0, -1]], dtype=np.complex128),
)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0)
PHASE = np.diag([1, 1j]).astype(np.complex128)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
)


def qubit_count(d: int) -> int:
    n = d.bit_length() - 1
    if d < 1 or 2**n != d:
        raise DimensionError(f"dimension {d} is not a power of two")
    return n


# ---------------------------------------------------------------------------
# Samplers (top-level classes so ensembles pickle into worker processes)
# ---------------------------------------------------------------------------


class ExplicitSampler:
    def __init__(self, unitaries: np.ndarray, weights: np.ndarray):
        self.unitaries = unitaries
        self.weights = weights

    def __call__(self, n: int, gen: np.random.Generator) -> np.ndarray:
        picks = gen.choice(len(self.weights), size=n, p=self.weights)
        return self.unitaries[picks]


class HaarSampler:
    def __init__(self, d: int):
        self.d = d

    def __call__(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return sample_haar_batch(self.d, n, gen)


class LocalHaarSampler:
    """Tensor products of independent single-qubit Haar unitaries."""

    def __init__(self, n_qubits: int):
        self.n_qubits = n_qubits

    def __call__(self, n: int, gen: np.random.Generator) -> np.ndarray:
        factors = [sample_haar_batch(2, n, gen) for _ in range(self.n_qubits)]
        return functools.reduce(batch_kron, factors)


class CircuitSampler:
    """Each step applies a Haar two-qubit gate to one randomly chosen qubit pair."""

    def __init__(self, n_qubits: int, depth: int, pairing: str):
        self.n_qubits = n_qubits
        self.depth = depth
        if pairing == "adjacent":
            self.pairs = [(i, i + 1) for i in range(n_qubits - 1)]
        elif pairing == "any":
            self.pairs = list(itertools.combinations(range(n_qubits), 2))
        else:
            raise ValueError(f"unknown circuit pairing {pairing!r}")

    def _apply(self, stack: np.ndarray, gates: np.ndarray, a: int, b: int) -> np.ndarray:
        n, d = stack.shape[0], stack.shape[1]
        tensor = stack.reshape((n,) + (2,) * self.n_qubits + (d,))
        moved = np.moveaxis(tensor, (1 + a, 1 + b), (1, 2))
        shape = moved.shape
        updated = gates @ moved.reshape(n, 4, -1)
        restored = np.moveaxis(updated.reshape(shape), (1, 2), (1 + a, 1 + b))
        return restored.reshape(n, d, d)

    def __call__(self, n: int, gen: np.random.Generator) -> np.ndarray:
        d = 2**self.n_qubits
        stack = np.broadcast_to(np.eye(d, dtype=np.complex128), (n, d, d)).copy()
        for _ in range(self.depth):
            gates = sample_haar_batch(4, n, gen)
            choice = gen.integers(len(self.pairs), size=n)
            for index in np.unique(choice):
                mask = choice == index
                a, b = self.pairs[index]
                stack[mask] = self._apply(stack[mask], gates[mask], a, b)
        return stack


class CliffordSampler:
    """Uniformly random n-qubit Clifford unitaries."""

    def __init__(self, n_qubits: int):
        self.n_qubits = n_qubits

    def __call__(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return np.stack(
            [random_clifford(self.n_qubits, seed=gen).to_matrix() for _ in range(n)]
        ).astype(np.complex128)


class IteratedSampler:
    """Products ``U_t ... U_1`` of independent draws from a base ensemble."""

    def __init__(self, base: UnitaryEnsemble, t: int):
        self.base = base
        self.t = t

    def __call__(self, n: int, gen: np.random.Generator) -> np.ndarray:
        product = self.base.sample(n, gen)
        for _ in range(self.t - 1):
            product = self.base.sample(n, gen) @ product
        return product


# ---------------------------------------------------------------------------
# Ensemble type
# ---------------------------------------------------------------------------


class UnitaryEnsemble(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    d: int = Field(gt=0)
    provenance: Provenance
    unitaries: Optional[np.ndarray] = None  # (S, d, d) when explicit
    weights: Optional[np.ndarray] = None
    sampler: Optional[Any] = None  # callable (n, Generator) -> (n, d, d)
    base: Optional[UnitaryEnsemble] = None  # set on iterated ensembles
    t: int = Field(default=1, ge=1)
    label: str = ""

    @model_validator(mode="after")
    def _check_elements(self):
        if (self.unitaries is None) == (self.sampler is None):
            raise ValueError("ensemble needs exactly one of unitaries or sampler")
        if self.unitaries is None:
            return self
        unitaries, weights = self.unitaries, self.weights
        if unitaries.ndim != 3 or unitaries.shape[1:] != (self.d, self.d):
            raise ValueError(f"unitaries must have shape (S, {self.d}, {self.d})")
        if weights is None or weights.shape != (unitaries.shape[0],):
            raise ValueError("one weight per unitary is required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > Config.STATE_ATOL:
            raise ValueError(f"weights must sum to 1, got {weights.sum()}")
        residual = max_unitarity_residual(unitaries)
        if residual > Config.UNITARY_ATOL:
            raise ValueError(f"element is not unitary (residual {residual:.3e})")
        return self

    @property
    def explicit(self) -> bool:
        return self.unitaries is not None

    @property
    def size(self) -> Optional[int]:
        return None if self.unitaries is None else int(self.unitaries.shape[0])

    def sample(self, n: int, rng: RngLike) -> np.ndarray:
        gen = as_generator(rng)
        if self.explicit:
            return ExplicitSampler(self.unitaries, self.weights)(n, gen)
        return self.sampler(n, gen)


def max_unitarity_residual(unitaries: np.ndarray) -> float:
    eye = np.eye(unitaries.shape[-1])
    products = np.conj(np.swapaxes(unitaries, -1, -2)) @ unitaries
    return float(np.max(np.linalg.norm(products - eye, axis=(-2, -1)), initial=0.0))


def explicit_ensemble(
    unitaries: np.ndarray,
    weights: Optional[np.ndarray] = None,
    provenance: Provenance = "custom",
    label: str = "",
) -> UnitaryEnsemble:
    unitaries = np.asarray(unitaries, dtype=np.complex128)
    if unitaries.ndim == 2:
        unitaries = unitaries[None]
    count = unitaries.shape[0]
    if weights is None:
        weights = np.full(count, 1.0 / count)
    weights = np.asarray(weights, dtype=float)
    return UnitaryEnsemble(
        d=unitaries.shape[-1],
        provenance=provenance,
        unitaries=unitaries,
        weights=weights,
        label=label,
    )


# ---------------------------------------------------------------------------
# Builtin ensembles
# ---------------------------------------------------------------------------


def identity_ensemble(d: int) -> UnitaryEnsemble:
    return explicit_ensemble(np.eye(d), provenance="identity", label=f"identity{d}")


def haar_ensemble(d: int) -> UnitaryEnsemble:
    return UnitaryEnsemble(d=d, provenance="haar", sampler=HaarSampler(d), label="haar")


def local_haar_ensemble(n: int) -> UnitaryEnsemble:
    return UnitaryEnsemble(
        d=2**n, provenance="local-haar", sampler=LocalHaarSampler(n), label="local-haar"
    )


def pauli_ensemble(n: int) -> UnitaryEnsemble:
    """All ``4^n`` Pauli strings with uniform weight."""
    if n > Config.MAX_PAULI_QUBITS:
        raise BudgetExceeded(
            f"explicit Pauli ensemble limited to n ≤ {Config.MAX_PAULI_QUBITS}"
        )
    strings = [
        functools.reduce(np.kron, factors, np.ones((1, 1), dtype=np.complex128))
        for factors in itertools.product(PAULIS, repeat=n)
    ]
    return explicit_ensemble(np.stack(strings), provenance="pauli", label=f"pauli{n}")


def _phase_key(matrix: np.ndarray) -> bytes:
    flat = matrix.reshape(-1)
    pivot = flat[np.argmax(np.abs(flat) > 1e-9)]
    normalized = flat * (np.conj(pivot) / abs(pivot))
    # + 0.0 folds negative zeros so equal matrices hash equal
    return (np.round(normalized, 8) + 0.0).tobytes()


def _closure(generators: List[np.ndarray]) -> List[np.ndarray]:
    """Group generated by ``generators`` modulo global phase (breadth first)."""
    identity = np.eye(generators[0].shape[0], dtype=np.complex128)
    seen = {_phase_key(identity): identity}
    frontier = [identity]
    while frontier:
        discovered = []
        for element in frontier:
            for generator in generators:
                product = generator @ element
                key = _phase_key(product)
                if key not in seen:
                    seen[key] = product
                    discovered.append(product)
        frontier = discovered
    return list(seen.values())


def clifford_group(n: int) -> np.ndarray:
    if n == 1:
        generators = [HADAMARD, PHASE]
    elif n == 2:
        eye = np.eye(2, dtype=np.complex128)
        generators = [
            np.kron(HADAMARD, eye),
            np.kron(eye, HADAMARD),
            np.kron(PHASE, eye),
            np.kron(eye, PHASE),
            CNOT,
        ]
    else:
        raise PreconditionError(
            f"Clifford enumeration supports n ≤ {Config.MAX_ENUMERATED_CLIFFORD_QUBITS}"
        )
    elements = np.stack(_closure(generators))
    logger.info(f"Enumerated {len(elements)} {n}-qubit Clifford elements")
    return elements


def clifford_ensemble(
    n: int,
    mode: Literal["enumerate", "random"] = "enumerate",
    samples: Optional[int] = None,
    rng: RngLike = None,
) -> UnitaryEnsemble:
    """
    Uniform distribution over the n-qubit Clifford group.

    ``enumerate`` lists the group modulo phase (24 elements for one qubit,
    11520 for two).  ``random`` returns ``samples`` independent uniform
    Cliffords as an explicit ensemble, or a generator-form ensemble when
    ``samples`` is None.
    """
    if mode == "enumerate":
        return explicit_ensemble(
            clifford_group(n), provenance="clifford", label=f"clifford{n}"
        )
    sampler = CliffordSampler(n)
    if samples is None:
        return UnitaryEnsemble(
            d=2**n, provenance="clifford", sampler=sampler, label=f"clifford{n}-random"
        )
    return explicit_ensemble(
        sampler(samples, as_generator(rng)),
        provenance="clifford",
        label=f"clifford{n}-random{samples}",
    )


def random_circuit_ensemble(
    n: int, depth: int, pairing: Optional[str] = None
) -> UnitaryEnsemble:
    """Generator-form ensemble of depth-``depth`` random two-qubit-gate circuits."""
    pairing = pairing or Config.CIRCUIT_PAIRING
    if depth == 0:
        return explicit_ensemble(
            np.eye(2**n), provenance="random-circuit", label="random-circuit-depth0"
        )
    if n < 2:
        raise PreconditionError("random circuits need at least two qubits")
    return UnitaryEnsemble(
        d=2**n,
        provenance="random-circuit",
        sampler=CircuitSampler(n, depth, pairing),
        label=f"random-circuit-n{n}-depth{depth}-{pairing}",
    )


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------


def iterate_ensemble(ensemble: UnitaryEnsemble, t: int) -> UnitaryEnsemble:
    if t < 1:
        raise PreconditionError(f"t must be at least 1, got {t}")
    if t == 1:
        return ensemble
    return UnitaryEnsemble(
        d=ensemble.d,
        provenance="iterated",
        sampler=IteratedSampler(ensemble, t),
        base=ensemble,
        t=t,
        label=f"{ensemble.label}^{t}",
    )


def materialize(ensemble: UnitaryEnsemble, max_elements: int = 10**5) -> UnitaryEnsemble:
    """Expand an iterated explicit ensemble into its ``S^t`` weighted products."""
    if ensemble.explicit:
        return ensemble
    base = ensemble.base
    if base is None or not base.explicit:
        raise PreconditionError("only iterated explicit ensembles can be materialized")
    if base.size**ensemble.t > max_elements:
        raise BudgetExceeded(f"{base.size}^{ensemble.t} products above {max_elements}")
    unitaries, weights = base.unitaries, base.weights
    for _ in range(ensemble.t - 1):
        unitaries = np.einsum("aij,bjk->abik", base.unitaries, unitaries).reshape(
            -1, base.d, base.d
        )
        weights = np.outer(base.weights, weights).reshape(-1)
    return explicit_ensemble(
        unitaries, weights, provenance="iterated", label=ensemble.label
    )


def required_iterations(lam: float, d: int, k: int, eps: float) -> int:
    """Smallest ``t ≥ 1`` with ``λ^t ≤ ε d^{-3k/2}``."""
    if not 0 < lam < 1:
        raise PreconditionError(f"λ must lie in (0, 1) to converge, got {lam}")
    if eps <= 0:
        raise PreconditionError("ε must be positive")
    exact = (math.log(eps) - 1.5 * k * math.log(d)) / math.log(lam)
    return max(1, math.ceil(exact - 1e-9))


def achieved_epsilon(lam: float, t: int, d: int, k: int) -> float:
    """``ε = λ^t d^{3k/2}`` reached after ``t`` iterations."""
    return float(math.exp(t * math.log(lam) + 1.5 * k * math.log(d))) if lam > 0 else 0.0


def pmin(ensemble: UnitaryEnsemble) -> float:
    if not ensemble.explicit:
        raise PreconditionError("p_min is undefined for generator-form ensembles")
    return float(ensemble.weights.min())


# ---------------------------------------------------------------------------
# State ensembles
# ---------------------------------------------------------------------------


class StateEnsemble(NamedTuple):
    kets: np.ndarray  # (m, d)
    weights: np.ndarray  # (m,)


def orbit_states(ensemble: UnitaryEnsemble, ket: np.ndarray) -> StateEnsemble:
    """Distinct states ``U|ket⟩`` (up to phase) with their accumulated weights."""
    if not ensemble.explicit:
        raise PreconditionError("orbit_states needs an explicit ensemble")
    images = ensemble.unitaries @ np.asarray(ket, dtype=np.complex128)
    merged: Dict[bytes, Tuple[np.ndarray, float]] = {}
    for image, weight in zip(images, ensemble.weights):
        key = _phase_key(image)
        previous = merged.get(key)
        merged[key] = (image, weight + (previous[1] if previous else 0.0))
    kets = np.stack([image for image, _ in merged.values()])
    weights = np.array([weight for _, weight in merged.values()])
    return StateEnsemble(kets, weights)


# ---------------------------------------------------------------------------
# JSON I/O
# ---------------------------------------------------------------------------


class EnsembleFile(BaseModel):
    d: int = Field(gt=0)
    provenance: Provenance = "custom"
    label: str = ""
    weights: List[float]
    unitaries: List[List[Tuple[float, float]]]
    version: Optional[str] = None
    seed: Optional[int] = None
    config_hash: Optional[str] = None


def save_ensemble(
    ensemble: UnitaryEnsemble, path: Path, meta: Optional[Dict[str, Any]] = None
) -> Path:
    """Write ``ensemble`` as JSON; ``meta`` keys (version, seed, hash) go in front."""
    if not ensemble.explicit:
        raise PreconditionError("only explicit ensembles can be saved")
    payload = {
        **(meta or {}),
        "d": ensemble.d,
        "provenance": ensemble.provenance,
        "label": ensemble.label,
        "weights": [float(w) for w in ensemble.weights],
        "unitaries": [
            [[float(z.real), float(z.imag)] for z in u.reshape(-1)]
            for u in ensemble.unitaries
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # repr-based float formatting round-trips doubles exactly
    path.write_text(json.dumps(payload))
    return path


def load_ensemble(path: Path) -> UnitaryEnsemble:
    data = EnsembleFile.model_validate_json(Path(path).read_text())
    pairs = np.array(data.unitaries, dtype=float)
    if pairs.ndim != 3 or pairs.shape[1] != data.d * data.d:
        raise DimensionError(f"each unitary needs {data.d * data.d} [re, im] entries")
    unitaries = (pairs[..., 0] + 1j * pairs[..., 1]).reshape(-1, data.d, data.d)
    return explicit_ensemble(
        unitaries, np.array(data.weights), provenance=data.provenance, label=data.label
    )


def describe_ensemble(ensemble: UnitaryEnsemble) -> Dict[str, Any]:
    info: Dict[str, Any] = {
        "d": ensemble.d,
        "provenance": ensemble.provenance,
        "label": ensemble.label,
        "explicit": ensemble.explicit,
        "size": ensemble.size,
        "t": ensemble.t,
    }
    if ensemble.explicit:
        info["pmin"] = pmin(ensemble)
        info["max_unitarity_residual"] = max_unitarity_residual(ensemble.unitaries)
    return info


# ---------------------------------------------------------------------------
# Name resolution
# ---------------------------------------------------------------------------


_NUMBERED = re.compile(r"^(pauli|clifford)(\d+)$")


def resolve_ensemble(
    spec: EnsembleSpec, d: Optional[int] = None, rng: RngLike = None
) -> UnitaryEnsemble:
    """Build the ensemble a spec names, checking it against dimension ``d``."""
    d = d or spec.d
    name = spec.name
    numbered = _NUMBERED.match(name)

    if numbered:
        family, n = numbered.group(1), int(numbered.group(2))
        if family == "pauli":
            ensemble = pauli_ensemble(n)
        elif n <= Config.MAX_ENUMERATED_CLIFFORD_QUBITS and spec.samples is None:
            ensemble = clifford_ensemble(n)
        else:
            ensemble = clifford_ensemble(n, "random", spec.samples, rng)
    elif name in ("haar", "identity", "clifford", "random-circuit", "local-haar"):
        if d is None:
            raise PreconditionError(f"ensemble {name!r} needs a dimension")
        if name == "haar":
            ensemble = haar_ensemble(d)
        elif name == "identity":
            ensemble = identity_ensemble(d)
        elif name == "clifford":
            ensemble = clifford_ensemble(qubit_count(d), "random", spec.samples, rng)
        elif name == "local-haar":
            ensemble = local_haar_ensemble(qubit_count(d))
        else:
            if spec.depth is None:
                raise PreconditionError("random-circuit ensemble needs a depth")
            ensemble = random_circuit_ensemble(qubit_count(d), spec.depth)
    elif Path(name).is_file():
        ensemble = load_ensemble(Path(name))
    else:
        raise UnknownNameError(f"unknown ensemble {name!r}")

    if d is not None and ensemble.d != d:
        raise DimensionError(f"ensemble {name!r} has d={ensemble.d}, expected {d}")
    return iterate_ensemble(ensemble, spec.iterations)
