"""
How close is an ensemble to a k-design?

Three measures, one per notion of approximate design:

* balanced-monomial deviation against the ``ε / d^k`` threshold
  (``monomial_deviation`` / ``certify_unitary_design``),
* the operator-norm deviation of a state ensemble's k-th moment from the
  normalized symmetric projector (``state_design_deviation``),
* the TPE contraction factor ``λ`` of the k-fold twirl (``tpe_lambda``).

Exhaustive certification compares full moment operators: every entry of
``E[U^{⊗m} ⊗ conj(U)^{⊗m}]`` is one balanced degree-``m`` monomial, so the
largest entrywise difference is the largest monomial deviation.
"""

from __future__ import annotations

import functools
import logging

from typing import NamedTuple, Optional

import numpy as np

from designlab.config import Config
from designlab.ensembles import UnitaryEnsemble, haar_ensemble
from designlab.errors import BudgetExceeded, ConvergenceError, PreconditionError
from designlab.haar import (
    RngLike,
    as_generator,
    haar_moment_operator,
    haar_monomial,
    iter_batches,
    mean_with_se,
    moment_row_col,
    monomial_values,
    sym_dim,
    sym_projector,
)
from designlab.models import CertReport, DesignSpec, MonomialSpec, RngStream, TpeSpec
from designlab.numkit import batch_kron, check_entries


logger = logging.getLogger(__name__)

# Element chunk for explicit moment sums; bounds peak memory of the kron stack.
_CHUNK_ENTRIES = 2**22


class MomentOperator(NamedTuple):
    matrix: np.ndarray
    se: Optional[np.ndarray]  # entrywise standard error, None when exact
    samples: int


class DeviationEstimate(NamedTuple):
    deviation: float
    se: float
    ensemble_value: complex
    haar_value: complex


class StateDesignDeviation(NamedTuple):
    norm: float  # ‖E[(ψψ†)^{⊗k}] − Π_sym / C‖_∞
    epsilon: float  # norm · C, comparable with ε of a state design


def has_exact_moments(ensemble: UnitaryEnsemble) -> bool:
    """Explicit, or an iteration of an explicit ensemble."""
    return ensemble.explicit or (ensemble.base is not None and ensemble.base.explicit)


def _tensor_powers(unitaries: np.ndarray, k: int) -> np.ndarray:
    """``U^{⊗k} ⊗ conj(U)^{⊗k}`` for each unitary of a stack."""
    if k == 0:
        return np.ones((unitaries.shape[0], 1, 1), dtype=np.complex128)
    factors = [unitaries] * k + [np.conj(unitaries)] * k
    return functools.reduce(batch_kron, factors)


def ensemble_moment_operator(
    ensemble: UnitaryEnsemble,
    k: int,
    samples: int = Config.MC_SAMPLES,
    rng: RngLike = None,
) -> MomentOperator:
    """
    ``E_ν[U^{⊗k} ⊗ conj(U)^{⊗k}]``.

    Exact for explicit ensembles and for iterated explicit ensembles (the base
    operator to the power ``t``); a Monte Carlo mean with entrywise standard
    errors otherwise.
    """
    size = ensemble.d ** (2 * k)
    check_entries(size, size)

    if ensemble.explicit:
        chunk = max(1, _CHUNK_ENTRIES // (size * size))
        total = np.zeros((size, size), dtype=np.complex128)
        for start in range(0, ensemble.size, chunk):
            stop = start + chunk
            powers = _tensor_powers(ensemble.unitaries[start:stop], k)
            total += np.einsum("n,nij->ij", ensemble.weights[start:stop], powers)
        return MomentOperator(total, None, 0)

    if has_exact_moments(ensemble):
        base = ensemble_moment_operator(ensemble.base, k)
        return MomentOperator(np.linalg.matrix_power(base.matrix, ensemble.t), None, 0)

    chunk = max(1, _CHUNK_ENTRIES // (size * size))
    total = np.zeros((size, size), dtype=np.complex128)
    squares = np.zeros((size, size), dtype=float)
    for count, gen in iter_batches(samples, rng):
        draws = ensemble.sample(count, gen)
        for start in range(0, count, chunk):
            powers = _tensor_powers(draws[start : start + chunk], k)
            total += powers.sum(axis=0)
            squares += (np.abs(powers) ** 2).sum(axis=0)
    mean = total / samples
    variance = np.maximum(squares / samples - np.abs(mean) ** 2, 0.0)
    se = np.sqrt(variance * samples / max(samples - 1, 1)) / np.sqrt(samples)
    return MomentOperator(mean, se, samples)


def _haar_operator(d: int, k: int, samples: int, rng: RngLike) -> MomentOperator:
    if k <= 2:
        return MomentOperator(haar_moment_operator(d, k), None, 0)
    return ensemble_moment_operator(haar_ensemble(d), k, samples, rng)


def _monomial_at(index: int, d: int, k: int, size: int) -> MonomialSpec:
    row, col = divmod(index, size)
    rows = np.unravel_index(row, (d,) * (2 * k))
    cols = np.unravel_index(col, (d,) * (2 * k))
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols)]
    return MonomialSpec(plain=tuple(pairs[:k]), conj=tuple(pairs[k:]))


# ---------------------------------------------------------------------------
# Monomial deviation
# ---------------------------------------------------------------------------


def _split_streams(rng: RngLike) -> tuple[RngLike, RngLike]:
    if isinstance(rng, RngStream):
        return rng.derive(0), rng.derive(1)
    gen = as_generator(rng)
    return gen, gen


def _ensemble_monomial(
    ensemble: UnitaryEnsemble, monomial: MonomialSpec, samples: int, rng: RngLike
) -> tuple[complex, float]:
    if ensemble.explicit:
        values = monomial_values(ensemble.unitaries, monomial)
        return complex(np.dot(ensemble.weights, values)), 0.0
    if has_exact_moments(ensemble):
        operator = ensemble_moment_operator(ensemble, monomial.k)
        row, col = moment_row_col(monomial, ensemble.d)
        return complex(operator.matrix[row, col]), 0.0
    chunks = [
        monomial_values(ensemble.sample(count, gen), monomial)
        for count, gen in iter_batches(samples, rng)
    ]
    return mean_with_se(np.concatenate(chunks))


def monomial_deviation(
    ensemble: UnitaryEnsemble,
    monomial: MonomialSpec,
    samples: int = Config.MC_SAMPLES,
    rng: RngLike = None,
) -> DeviationEstimate:
    """``|E_ν M − E_H M|``; sides without a closed form are sampled."""
    if not monomial.balanced:
        raise PreconditionError("monomial deviation is defined for balanced monomials")
    ensemble_rng, haar_rng = _split_streams(rng)
    value, ensemble_se = _ensemble_monomial(ensemble, monomial, samples, ensemble_rng)
    if monomial.k <= 2:
        haar = haar_monomial(monomial, ensemble.d)
    else:
        haar = haar_monomial(monomial, ensemble.d, "mc", samples, haar_rng)
    return DeviationEstimate(
        deviation=abs(value - haar.value),
        se=float(np.hypot(ensemble_se, haar.se)),
        ensemble_value=value,
        haar_value=haar.value,
    )


# ---------------------------------------------------------------------------
# Unitary design certification
# ---------------------------------------------------------------------------


def exhaustive_count(d: int, k: int) -> int:
    """Balanced monomials of every degree ``1..k`` (``Σ d^{4m}``)."""
    return sum(d ** (4 * m) for m in range(1, k + 1))


def _exhaustive_scan(ensemble, spec, samples, rng):
    ensemble_rng, haar_rng = _split_streams(rng)
    worst = (-np.inf, 0.0, None)  # (deviation, se, monomial)
    passed, sampled, count = True, False, 0
    for m in range(1, spec.k + 1):
        nu = ensemble_moment_operator(ensemble, m, samples, ensemble_rng)
        haar = _haar_operator(ensemble.d, m, samples, haar_rng)
        deviation = np.abs(nu.matrix - haar.matrix)
        se = np.zeros_like(deviation)
        for part in (nu.se, haar.se):
            if part is not None:
                se = np.hypot(se, part)
                sampled = True
        excess = deviation - spec.threshold - Config.ACCEPT_SIGMA * se
        passed = passed and bool(np.all(excess <= 0))
        count += deviation.size
        index = int(np.argmax(deviation))
        flat = deviation.reshape(-1)
        if flat[index] > worst[0]:
            size = deviation.shape[0]
            monomial = _monomial_at(index, ensemble.d, m, size)
            worst = (float(flat[index]), float(se.reshape(-1)[index]), monomial)
        logger.debug(f"Degree {m}: max deviation {flat[index]:.3e}")
    return worst, passed, sampled, count


def _random_monomials(d: int, m: int, count: int, gen: np.random.Generator):
    draws = gen.integers(d, size=(count, 4, m))
    for p, q, r, s in draws:
        yield MonomialSpec(
            plain=tuple(zip(p.tolist(), q.tolist())),
            conj=tuple(zip(r.tolist(), s.tolist())),
        )


def _sampled_scan(ensemble, spec, n_monomials, samples, rng):
    ensemble_rng, haar_rng = _split_streams(rng)
    index_gen = as_generator(rng.derive(2) if isinstance(rng, RngStream) else rng)
    worst = (-np.inf, 0.0, None)
    passed, sampled, count = True, False, 0

    # one fixed draw of each side, reused for every monomial
    draws = None
    if not has_exact_moments(ensemble):
        draws = np.concatenate(
            [ensemble.sample(n, gen) for n, gen in iter_batches(samples, ensemble_rng)]
        )
    haar_draws = None
    if spec.k > 2:
        haar_draws = np.concatenate(
            [
                haar_ensemble(ensemble.d).sample(n, gen)
                for n, gen in iter_batches(samples, haar_rng)
            ]
        )

    for m in range(1, spec.k + 1):
        for monomial in _random_monomials(ensemble.d, m, n_monomials, index_gen):
            if draws is None:
                value, nu_se = _ensemble_monomial(ensemble, monomial, samples, None)
            else:
                value, nu_se = mean_with_se(monomial_values(draws, monomial))
                sampled = True
            if m <= 2:
                haar_value, haar_se = haar_monomial(monomial, ensemble.d).value, 0.0
            else:
                haar_value, haar_se = mean_with_se(monomial_values(haar_draws, monomial))
                sampled = True
            deviation = abs(value - haar_value)
            se = float(np.hypot(nu_se, haar_se))
            if deviation > spec.threshold + Config.ACCEPT_SIGMA * se:
                passed = False
            if deviation > worst[0]:
                worst = (deviation, se, monomial)
            count += 1
    return worst, passed, sampled, count


def certify_unitary_design(
    ensemble: UnitaryEnsemble,
    spec: DesignSpec,
    strategy: str = "auto",
    n_monomials: int = 1000,
    samples: int = Config.MC_SAMPLES,
    rng: RngLike = None,
) -> CertReport:
    """
    Check every balanced monomial of degree ``1..k`` against ``ε / d^k``.

    ``exhaustive`` walks all ``Σ d^{4m}`` monomials and refuses when that
    exceeds the monomial budget; ``random-monomials`` draws ``n_monomials``
    index tuples per degree; ``auto`` picks exhaustive when it fits.  Sampled
    quantities pass with a 3-standard-error slack.
    """
    if ensemble.d != spec.d:
        raise PreconditionError(f"ensemble d={ensemble.d} but spec d={spec.d}")
    total = exhaustive_count(spec.d, spec.k)
    if strategy == "auto":
        strategy = "exhaustive" if total <= Config.MONOMIAL_BUDGET else "random-monomials"
    if strategy == "exhaustive":
        if total > Config.MONOMIAL_BUDGET:
            raise BudgetExceeded(
                f"{total} monomials exceed the budget of {Config.MONOMIAL_BUDGET}"
            )
        worst, passed, sampled, count = _exhaustive_scan(ensemble, spec, samples, rng)
    elif strategy == "random-monomials":
        worst, passed, sampled, count = _sampled_scan(
            ensemble, spec, n_monomials, samples, rng
        )
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    deviation, se, monomial = worst
    exhaustive = strategy == "exhaustive" and not sampled
    report = CertReport(
        spec=spec,
        max_deviation=deviation,
        worst_monomial=monomial,
        mode="exhaustive" if exhaustive else "sampled",
        n_samples=samples if sampled else None,
        n_monomials=count,
        passed=passed,
        se=se if sampled else None,
        threshold=spec.threshold,
        provenance=ensemble.provenance,
        seed=rng.seed if isinstance(rng, RngStream) else None,
    )
    logger.info(
        f"Certified {ensemble.label or ensemble.provenance} at k={spec.k}: "
        f"max deviation {deviation:.3e} vs {spec.threshold:.3e} "
        f"({'pass' if passed else 'fail'})"
    )
    return report


# ---------------------------------------------------------------------------
# State designs
# ---------------------------------------------------------------------------


def state_design_deviation(
    kets: np.ndarray, k: int, weights: Optional[np.ndarray] = None
) -> StateDesignDeviation:
    kets = np.atleast_2d(np.asarray(kets, dtype=np.complex128))
    count, d = kets.shape
    check_entries(d**k, d**k)
    if weights is None:
        weights = np.full(count, 1.0 / count)
    powers = kets
    for _ in range(k - 1):
        powers = np.einsum("ni,nj->nij", powers, kets).reshape(count, -1)
    moment = np.einsum("n,ni,nj->ij", weights, powers, powers.conj())
    normalization = sym_dim(d, k)
    difference = moment - sym_projector(d, k) / normalization
    norm = float(np.max(np.abs(np.linalg.eigvalsh(difference))))
    return StateDesignDeviation(norm, norm * normalization)


# ---------------------------------------------------------------------------
# Tensor product expanders
# ---------------------------------------------------------------------------


def _power_iteration(delta: np.ndarray) -> float:
    """Largest singular value of ``delta`` via power iteration on ``Δ†Δ``."""
    size = delta.shape[0]
    start = np.random.default_rng(0)
    vector = start.standard_normal(size) + 1j * start.standard_normal(size)
    vector /= np.linalg.norm(vector)
    gram = delta.conj().T @ delta
    estimate = 0.0
    for _ in range(Config.POWER_MAX_ITER):
        image = gram @ vector
        norm = np.linalg.norm(image)
        if norm == 0.0:
            return 0.0
        vector = image / norm
        if abs(norm - estimate) <= Config.POWER_TOL * max(1.0, norm):
            return float(np.sqrt(norm))
        estimate = norm
    raise ConvergenceError(
        f"power iteration did not converge in {Config.POWER_MAX_ITER} steps"
    )


def tpe_lambda(
    ensemble: UnitaryEnsemble,
    k: int,
    samples: int = Config.MC_SAMPLES,
    rng: RngLike = None,
) -> float:
    """
    ``‖T_ν − T_H‖`` on the ``d^{2k}``-dimensional space of ``d^k × d^k`` matrices.

    ``T`` is the k-fold twirl; generator-form ensembles use a sampled ``T_ν``
    so the value is an estimate.
    """
    if k > 2:
        raise PreconditionError("λ needs the exact Haar twirl, available for k ≤ 2")
    space = ensemble.d ** (2 * k)
    if space > Config.TPE_MAX_SPACE:
        raise BudgetExceeded(f"twirl space {space} exceeds {Config.TPE_MAX_SPACE}")
    nu = ensemble_moment_operator(ensemble, k, samples, rng)
    if nu.se is not None:
        logger.warning(f"λ of {ensemble.label} estimated from {nu.samples} samples")
    lam = _power_iteration(nu.matrix - haar_moment_operator(ensemble.d, k))
    return lam


def tpe_spec(ensemble: UnitaryEnsemble, k: int) -> TpeSpec:
    if not ensemble.explicit:
        raise PreconditionError("a TPE spec needs an explicit ensemble")
    lam = min(tpe_lambda(ensemble, k), 1.0)
    return TpeSpec(d=ensemble.d, D=ensemble.size, lam=lam, k=k)

