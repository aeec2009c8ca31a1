"""
Monte Carlo harnesses that turn sampled ensembles into empirical tail curves.

Each experiment reduces a draw to one scalar ``X``, oriented so that the
event of interest is ``X ≥ threshold``, and compares the empirical
exceedance frequency (with a one-sided Wilson upper confidence bound) against
the matching analytic bound from ``designlab.bounds``.

Draws are split into fixed-size batches, each with its own stream derived
from the experiment seed.  Batch results are concatenated in batch order, so
a curve depends only on the seed and the config, never on the worker count.
"""

from __future__ import annotations

import logging
import math
import multiprocessing
import time

from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np

from scipy.stats import norm
from tqdm import tqdm

from designlab import bounds
from designlab.config import Config
from designlab.ensembles import UnitaryEnsemble, resolve_ensemble
from designlab.errors import (
    BudgetExceeded,
    ConvergenceError,
    DimensionError,
    InvariantViolation,
    PreconditionError,
)
from designlab.haar import RngLike, as_generator, expected_purity, sample_haar_states
from designlab.models import (
    BipartiteDims,
    BoundResult,
    ConstraintSpec,
    ExperimentConfig,
    LipschitzFn,
    PolynomialSpec,
    RngStream,
    TailCurve,
    TailProfile,
)
from designlab.numkit import (
    DensityMatrix,
    PureState,
    basis_state,
    batch_entropies,
    batch_purities,
    batch_reduced_states,
    batch_trace_distances,
    pure_state,
)


logger = logging.getLogger(__name__)

# Ensemble construction draws (sampled Cliffords) use a stream no batch reaches
BUILD_STREAM = 2**32


# ---------------------------------------------------------------------------
# Constrained subspaces
# ---------------------------------------------------------------------------


class ConstrainedSubspace(NamedTuple):
    isometry: np.ndarray  # (d_S d_E, d_R), orthonormal columns
    omega_S: DensityMatrix
    d_eff: float  # 1 / tr Ω_E²


def embedding_isometry(c: ConstraintSpec) -> np.ndarray:
    """Columns spanning the constrained subspace, shape ``(d_S d_E, d_R)``."""
    if c.embedding == "first-basis":
        isometry = np.eye(c.d, c.d_R, dtype=np.complex128)
    elif c.embedding == "random-subspace":
        gen = np.random.default_rng(c.seed)
        shape = (c.d, c.d_R)
        gaussian = gen.standard_normal(shape) + 1j * gen.standard_normal(shape)
        isometry, _ = np.linalg.qr(gaussian)
    elif c.embedding == "energy-window":
        low, high = c.window
        selected = [i for i, e in enumerate(c.energies) if low <= e <= high]
        isometry = np.eye(c.d, dtype=np.complex128)[:, selected]
    else:
        entries = np.array(c.columns, dtype=float)
        isometry = (entries[..., 0] + 1j * entries[..., 1]).T
    if isometry.shape != (c.d, c.d_R):
        raise DimensionError(f"embedding has shape {isometry.shape}, need {(c.d, c.d_R)}")
    residual = np.linalg.norm(isometry.conj().T @ isometry - np.eye(c.d_R))
    if residual > Config.UNITARY_ATOL:
        raise InvariantViolation(f"embedding is not an isometry ({residual:.3e})")
    return isometry


def constrained_subspace(c: ConstraintSpec) -> ConstrainedSubspace:
    isometry = embedding_isometry(c)
    blocks = isometry.T.reshape(c.d_R, c.d_S, c.d_E)
    omega_S = np.einsum("nia,nja->ij", blocks, blocks.conj()) / c.d_R
    omega_E = np.einsum("nai,naj->ij", blocks, blocks.conj()) / c.d_R
    d_eff = float(1.0 / np.vdot(omega_E, omega_E).real)
    omega_S = DensityMatrix(matrix=0.5 * (omega_S + omega_S.conj().T))
    return ConstrainedSubspace(isometry, omega_S, d_eff)


def canonical_state(c: ConstraintSpec) -> DensityMatrix:
    """``Ω_S = tr_E(P_R / d_R)`` for the projector ``P_R`` onto the subspace."""
    return constrained_subspace(c).omega_S


def effective_env_dim(c: ConstraintSpec) -> float:
    return constrained_subspace(c).d_eff


# ---------------------------------------------------------------------------
# Tail comparison
# ---------------------------------------------------------------------------


def wilson_upper(
    hits: np.ndarray, n: int, confidence: float = Config.WILSON_CONFIDENCE
) -> np.ndarray:
    """One-sided Wilson score upper bound on a binomial proportion."""
    z = norm.ppf(confidence)
    p = np.asarray(hits, dtype=float) / n
    center = p + z * z / (2 * n)
    spread = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return np.minimum(1.0, (center + spread) / (1 + z * z / n))


def vacuous_bound(name: str, inputs: Dict[str, float], reason: str) -> BoundResult:
    """Stand-in for grid points a bound does not cover."""
    return BoundResult(
        name=name,
        inputs=inputs,
        bound=1.0,
        raw=math.inf,
        log2_bound=0.0,
        clamped=True,
        extras={"vacuous": reason},
    )


def tightest(results: List[BoundResult]) -> BoundResult:
    """The smallest of several valid bounds, keeping every warning."""
    best = min(results, key=lambda r: r.log2_bound)
    warnings = list(dict.fromkeys(w for r in results for w in r.warnings))
    return best.model_copy(update={"warnings": warnings})


def tail_compare(
    samples: np.ndarray,
    grid: List[float],
    bound: Callable[[float], BoundResult],
    kind: str = "tailcurve",
) -> TailCurve:
    """
    Empirical ``P(X ≥ g)`` on the grid against ``bound(g)``.

    A point is checked only where the bound is below 1.  A point with no
    observed exceedances whose bound sits below the zero-count Wilson floor
    cannot be decided by this sample and is left unresolved.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise PreconditionError("tail comparison needs at least one sample")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise PreconditionError("grid must be sorted ascending")
    n = samples.size
    thresholds = np.asarray(grid, dtype=float)
    hits = n - np.searchsorted(np.sort(samples), thresholds, side="left")
    upper = wilson_upper(hits, n)
    floor = float(wilson_upper(np.zeros(1), n)[0])

    results = [bound(g) for g in grid]
    point_pass: List[Optional[bool]] = []
    unresolved = 0
    for result, wilson, count in zip(results, upper, hits):
        if result.bound >= 1.0:
            point_pass.append(None)
        elif count == 0 and result.bound < floor:
            point_pass.append(None)
            unresolved += 1
        else:
            point_pass.append(bool(wilson <= result.bound))
    warnings = list(dict.fromkeys(w for r in results for w in r.warnings))
    if unresolved:
        warnings.append(
            f"{unresolved} grid points have bounds below the {n}-sample floor {floor:.3g}"
        )
        logger.warning(warnings[-1])

    return TailCurve(
        kind=kind,
        grid=list(grid),
        empirical=[float(x) for x in hits / n],
        wilson_upper=[float(x) for x in upper],
        bound=[r.bound for r in results],
        log2_bound=[r.log2_bound for r in results],
        point_pass=point_pass,
        passed=all(p is not False for p in point_pass),
        n_samples=n,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# Batch jobs (top-level classes so they pickle into worker processes)
# ---------------------------------------------------------------------------


class ReducedStateJob:
    """Per draw: ``S``, ``S₂`` and purity of ``tr_E U|ψ₀⟩``, plus ``|⟨ψ₀|U|ψ₀⟩|²``."""

    def __init__(self, ensemble: UnitaryEnsemble, dims: BipartiteDims, ket0: np.ndarray):
        self.ensemble = ensemble
        self.dims = dims
        self.ket0 = ket0

    def __call__(self, size: int, gen: np.random.Generator) -> np.ndarray:
        kets = self.ensemble.sample(size, gen) @ self.ket0
        rhos = batch_reduced_states(kets, self.dims)
        purities = batch_purities(rhos)
        overlaps = np.abs(kets @ self.ket0.conj()) ** 2
        return np.stack(
            [batch_entropies(rhos), -np.log2(purities), purities, overlaps], axis=1
        )


class CanonicalDistanceJob:
    """Per draw: ``‖tr_E(V U|e₁⟩⟨e₁|U†V†) − Ω_S‖₁`` and the reduced purity."""

    def __init__(
        self,
        ensemble: UnitaryEnsemble,
        subspace: ConstrainedSubspace,
        dims: BipartiteDims,
    ):
        self.ensemble = ensemble
        self.isometry = subspace.isometry
        self.omega_S = subspace.omega_S.matrix
        self.dims = dims

    def __call__(self, size: int, gen: np.random.Generator) -> np.ndarray:
        inner = self.ensemble.sample(size, gen)[:, :, 0]
        rhos = batch_reduced_states(inner @ self.isometry.T, self.dims)
        distances = batch_trace_distances(rhos, self.omega_S)
        return np.stack([distances, batch_purities(rhos)], axis=1)


class GeometricMeasureJob:
    """Per draw: the alternating-optimization estimate of ``E_g``."""

    def __init__(self, ensemble: Optional[UnitaryEnsemble], n: int, restarts: int):
        self.ensemble = ensemble  # None draws Haar-random states directly
        self.n = n
        self.restarts = restarts

    def __call__(self, size: int, gen: np.random.Generator) -> np.ndarray:
        if self.ensemble is None:
            kets = sample_haar_states(2**self.n, size, gen)
        else:
            kets = self.ensemble.sample(size, gen)[:, :, 0]
        values = [
            geom_ent_estimate(ket, self.n, self.restarts, rng=gen).value for ket in kets
        ]
        return np.array(values)[:, None]


def _run_job(task) -> np.ndarray:
    job, size, stream = task
    return job(size, stream.generator())


def run_batches(
    job: Callable[[int, np.random.Generator], np.ndarray],
    samples: int,
    stream: RngStream,
    batch_size: int = Config.MC_BATCH,
    workers: int = 1,
    desc: str = "samples",
    progress: Optional[bool] = None,
) -> np.ndarray:
    """Evaluate ``job`` on ``samples`` draws, batch ``i`` using ``stream.derive(i)``."""
    tasks = [
        (job, min(batch_size, samples - start), stream.derive(index))
        for index, start in enumerate(range(0, samples, batch_size))
    ]
    # disable=None lets tqdm show the bar only on a terminal
    hide = None if progress else True
    bar = dict(total=len(tasks), desc=desc, unit="batch", disable=hide)
    if workers <= 1:
        results = [_run_job(task) for task in tqdm(tasks, **bar)]
    else:
        with multiprocessing.Pool(workers) as pool:
            results = list(tqdm(pool.imap(_run_job, tasks), **bar))
    return np.concatenate(results, axis=0)


# ---------------------------------------------------------------------------
# Geometric measure of entanglement
# ---------------------------------------------------------------------------


class GeomEstimate(NamedTuple):
    value: float  # −log₂ of the best overlap found
    overlap: float
    witness: np.ndarray  # (n, 2) local factors of the best product state
    sweeps: int


class NetCertificate(NamedTuple):
    lower: float  # attained by a product state on the net
    upper: float
    points: int
    log2_net_size: float  # counting bound for the same γ

    @property
    def entanglement(self) -> tuple[float, float]:
        """The matching ``E_g`` interval."""
        return -math.log2(self.upper), -math.log2(self.lower)


def _amplitude_tensor(psi, n: int) -> np.ndarray:
    amplitudes = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi)
    if amplitudes.size != 2**n:
        raise DimensionError(f"state has {amplitudes.size} amplitudes, need {2**n}")
    return amplitudes.astype(np.complex128).reshape((2,) * n)


def _contract_except(tensor: np.ndarray, factors: np.ndarray, skip: int) -> np.ndarray:
    """Contract every qubit but ``skip`` with the conjugated local factors."""
    result = tensor
    for j in reversed(range(factors.shape[1])):
        if j != skip:
            moved = np.moveaxis(result, j + 1, -1)
            result = np.einsum("r...i,ri->r...", moved, factors[:, j].conj())
    return result


def geom_ent_estimate(
    psi,
    n: int,
    restarts: int = Config.GEOM_RESTARTS,
    tol: float = Config.GEOM_TOL,
    rng: RngLike = None,
) -> GeomEstimate:
    """
    Upper estimate of ``E_g`` by alternating maximization over product states.

    With all local vectors but one held fixed, the best remaining vector is
    the normalized partial contraction of ``ψ``.  Sweeps repeat until no
    restart's overlap moves by more than ``tol``; restarts run as one batch.
    """
    if n > Config.GEOM_MAX_QUBITS:
        raise BudgetExceeded(f"E_g estimates stop at {Config.GEOM_MAX_QUBITS} qubits")
    single = _amplitude_tensor(psi, n)
    gen = as_generator(rng)
    tensor = np.broadcast_to(single, (restarts,) + single.shape)
    shape = (restarts, n, 2)
    factors = gen.standard_normal(shape) + 1j * gen.standard_normal(shape)
    factors /= np.linalg.norm(factors, axis=-1, keepdims=True)

    overlaps = np.zeros(restarts)
    for sweep in range(1, Config.GEOM_MAX_SWEEPS + 1):
        previous = overlaps
        for i in range(n):
            local = _contract_except(tensor, factors, i)
            norms = np.linalg.norm(local, axis=-1)
            factors[:, i] = local / np.where(norms > 0, norms, 1.0)[:, None]
            overlaps = norms**2
        if np.max(np.abs(overlaps - previous)) < tol:
            break
    else:
        raise ConvergenceError(
            f"alternating optimization did not settle in {Config.GEOM_MAX_SWEEPS} sweeps"
        )
    best = int(np.argmax(overlaps))
    overlap = float(min(overlaps[best], 1.0))
    return GeomEstimate(-math.log2(overlap), overlap, factors[best].copy(), sweep)


def bloch_grid(step: float) -> np.ndarray:
    """Qubit states whose Bloch vectors come within angle ``step`` of every point."""
    states = []
    rings = max(1, math.ceil(math.pi / step))
    for theta in np.linspace(0.0, math.pi, rings + 1):
        count = max(1, math.ceil(2 * math.pi * math.sin(theta) / step))
        for phi in np.arange(count) * (2 * math.pi / count):
            states.append([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])
    return np.array(states, dtype=np.complex128)


def geom_ent_net_certify(psi, n: int, gamma: float) -> NetCertificate:
    """
    Bracket ``max_α |⟨α|ψ⟩|²`` over product states to within ``gamma``.

    The first ``n − 1`` qubits range over a Bloch-sphere grid and the last is
    optimized exactly: for fixed factors the best overlap is the squared norm
    of the partial contraction.  A grid with angular spacing ``h`` moves the
    overlap by at most ``√(n−1) · h / 2``, so ``h = 2γ / √(n−1)``.
    """
    if n > Config.NET_MAX_QUBITS:
        raise BudgetExceeded(f"net certificates stop at {Config.NET_MAX_QUBITS} qubits")
    if gamma <= 0:
        raise PreconditionError("γ must be positive")
    tensor = _amplitude_tensor(psi, n)
    log2_size = bounds.net_size(gamma, n)
    if n == 1:
        return NetCertificate(1.0, 1.0, 1, log2_size)

    grid = bloch_grid(2 * gamma / math.sqrt(n - 1))
    points = len(grid) ** (n - 1)
    if points > Config.NET_BUDGET:
        raise BudgetExceeded(f"net of {points} points exceeds {Config.NET_BUDGET}")

    best = 0.0
    for chunk in np.array_split(grid, math.ceil(len(grid) / 256)):
        # axes: chunk, uncontracted qubits, then one grid axis per contracted qubit
        partial = np.tensordot(chunk.conj(), tensor, axes=([1], [0]))
        for _ in range(n - 2):
            partial = np.tensordot(partial, grid.conj(), axes=([1], [1]))
        best = max(best, float(np.max(np.sum(np.abs(partial) ** 2, axis=1))))
    logger.debug("net of %d points gives overlap %.6f", points, best)
    return NetCertificate(min(best, 1.0), min(1.0, best + gamma), points, log2_size)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _stream(cfg: ExperimentConfig) -> RngStream:
    if cfg.seed is None:
        raise PreconditionError("experiments need a resolved seed")
    return RngStream(seed=cfg.seed)


def _initial_ket(cfg: ExperimentConfig, d: int) -> np.ndarray:
    if cfg.initial_state is None:
        return basis_state(0, d).amplitudes
    amplitudes = np.array([re + 1j * im for re, im in cfg.initial_state])
    if amplitudes.size != d:
        raise DimensionError(f"initial state has {amplitudes.size} amplitudes, need {d}")
    return pure_state(amplitudes).amplitudes


def _check_dim(d: int) -> None:
    if d > Config.MAX_STATE_DIM:
        raise BudgetExceeded(f"dimension {d} exceeds {Config.MAX_STATE_DIM}")


def _reduced_state_samples(cfg: ExperimentConfig, workers: int, progress) -> tuple:
    dims = cfg.dims
    _check_dim(dims.d)
    stream = _stream(cfg)
    ensemble = resolve_ensemble(cfg.ensemble, d=dims.d, rng=stream.derive(BUILD_STREAM))
    ket0 = _initial_ket(cfg, dims.d)
    job = ReducedStateJob(ensemble, dims, ket0)
    columns = run_batches(
        job, cfg.samples, stream, cfg.batch_size, workers, cfg.kind, progress
    )
    return ensemble, ket0, columns


def _finish(
    curve: TailCurve, cfg: ExperimentConfig, label: str, stats: Dict[str, float]
) -> TailCurve:
    return curve.model_copy(
        update={
            "seed": cfg.seed,
            "ensemble": label,
            "stats": {key: float(value) for key, value in stats.items()},
        }
    )


def entropy_experiment(
    cfg: ExperimentConfig, workers: int = 1, progress: Optional[bool] = None
) -> TailCurve:
    """
    Tail of low entanglement entropy, ``X = log₂ d_S − β − S(ψ_S)``.

    The comparison bound is the tightest of the 2-design Markov bound, the
    Haar concentration bound (for the Haar ensemble) and the k-design moment
    bound (when a design order of at least 4 is claimed).
    """
    dims = cfg.dims
    ensemble, _, columns = _reduced_state_samples(cfg, workers, progress)
    entropy, renyi2, purities = columns[:, 0], columns[:, 1], columns[:, 2]
    if np.any(renyi2 > entropy + 1e-9):
        raise InvariantViolation("Rényi-2 entropy exceeded the von Neumann entropy")
    beta = bounds.beta_offset(dims)
    mu = expected_purity(dims)
    k = cfg.design_k

    def bound(alpha: float) -> BoundResult:
        if alpha <= 0:
            return vacuous_bound("entropy", {"alpha": alpha}, "α ≤ 0")
        candidates = [bounds.markov_entropy_tail(alpha)]
        if cfg.ensemble.name == "haar":
            haar = bounds.entropy_tail_haar(dims, alpha)
            if not haar.warnings:
                candidates.append(haar)
        if k is not None and k >= 4:
            m = cfg.m or k // 4
            candidates.append(
                bounds.entropy_tail_design_messy(mu, alpha, m, cfg.design_eps, dims.d, k)
            )
        return tightest(candidates)

    curve = tail_compare(math.log2(dims.d_S) - beta - entropy, cfg.grid, bound, cfg.kind)
    stats = {
        "mean_entropy": entropy.mean(),
        "mean_renyi2": renyi2.mean(),
        "mean_purity": purities.mean(),
        "purity_se": purities.std(ddof=1) / math.sqrt(purities.size),
        "expected_purity": mu,
        "beta": beta,
    }
    return _finish(curve, cfg, ensemble.label, stats)


def purity_tail_experiment(
    cfg: ExperimentConfig, workers: int = 1, progress: Optional[bool] = None
) -> TailCurve:
    """
    Two-sided purity deviation ``X = |tr ψ_S² − μ|``.

    Purity is 2-Lipschitz, so without a design claim the Haar tail is the
    Lévy bound.  With one, purity is treated as a degree-2 polynomial in the
    unitary and compared against the moment-method curve.
    """
    dims = cfg.dims
    ensemble, ket0, columns = _reduced_state_samples(cfg, workers, progress)
    purities = columns[:, 2]
    mu = expected_purity(dims)
    eta = bounds.purity_lipschitz()
    profile = TailProfile(C=4.0, a=bounds.c1() * dims.d / eta**2, mu=mu)
    rho0 = DensityMatrix(matrix=np.outer(ket0, ket0.conj()))
    poly = PolynomialSpec(K=2, alpha=bounds.alpha_purity(rho0, dims.d))

    def bound(delta: float) -> BoundResult:
        if delta <= 0:
            return vacuous_bound("purity", {"delta": delta}, "δ ≤ 0")
        if cfg.design_k is None:
            return bounds.levy_bound(LipschitzFn(eta=eta), dims.d, delta)
        return bounds.poly_tail_design(
            profile, poly, cfg.design_eps, dims.d, cfg.design_k, delta, cfg.m
        )

    curve = tail_compare(np.abs(purities - mu), cfg.grid, bound, cfg.kind)
    stats = {
        "mean_purity": purities.mean(),
        "purity_se": purities.std(ddof=1) / math.sqrt(purities.size),
        "expected_purity": mu,
        "alpha": poly.alpha,
    }
    return _finish(curve, cfg, ensemble.label, stats)


def overlap_experiment(
    cfg: ExperimentConfig, workers: int = 1, progress: Optional[bool] = None
) -> TailCurve:
    """Fidelity with the initial state, ``X = |⟨ψ₀|U|ψ₀⟩|²``, against ``m!/(dδ)^m``."""
    d = cfg.dims.d
    ensemble, _, columns = _reduced_state_samples(cfg, workers, progress)
    overlaps = columns[:, 3]
    orders = [cfg.m] if cfg.m else list(range(1, (cfg.design_k or 1) + 1))

    def bound(delta: float) -> BoundResult:
        if delta <= 0:
            return vacuous_bound("overlap", {"delta": delta}, "δ ≤ 0")
        eps, k = cfg.design_eps, cfg.design_k
        return tightest([bounds.overlap_tail(d, delta, m, eps, k) for m in orders])

    curve = tail_compare(overlaps, cfg.grid, bound, cfg.kind)
    stats = {"mean_overlap": overlaps.mean(), "expected_overlap": 1.0 / d}
    return _finish(curve, cfg, ensemble.label, stats)


def statmech_experiment(
    cfg: ExperimentConfig, workers: int = 1, progress: Optional[bool] = None
) -> TailCurve:
    """
    Distance of a random constrained state's reduction from the canonical state.

    ``|φ⟩ = V U |e₁⟩`` with ``U`` drawn on the ``d_R``-dimensional subspace and
    ``X = ‖tr_E φ − Ω_S‖₁``.
    """
    c = cfg.constraint
    _check_dim(c.d)
    subspace = constrained_subspace(c)
    stream = _stream(cfg)
    ensemble = resolve_ensemble(cfg.ensemble, d=c.d_R, rng=stream.derive(BUILD_STREAM))
    job = CanonicalDistanceJob(ensemble, subspace, c.dims)
    columns = run_batches(
        job, cfg.samples, stream, cfg.batch_size, workers, cfg.kind, progress
    )
    distances = columns[:, 0]
    offset = math.sqrt(c.d_S / subspace.d_eff)

    def bound(delta: float) -> BoundResult:
        if delta <= 0:
            return vacuous_bound("statmech", {"delta": delta}, "δ ≤ 0")
        candidates = []
        if delta > offset:
            candidates.append(
                bounds.statmech_tail_haar(c.d_S, c.d_R, subspace.d_eff, delta - offset)
            )
        if cfg.design_k is not None:
            mode = "simplified" if cfg.design_k % 8 == 0 else "messy"
            candidates.append(
                bounds.statmech_tail_design(
                    c.d_S, c.d_R, delta, cfg.design_k, cfg.design_eps, mode, cfg.m
                )
            )
        if not candidates:
            return vacuous_bound("statmech", {"delta": delta}, "δ within the offset")
        return tightest(candidates)

    curve = tail_compare(distances, cfg.grid, bound, cfg.kind)
    stats = {
        "mean_distance": distances.mean(),
        "mean_purity": columns[:, 1].mean(),
        "d_eff": subspace.d_eff,
        "offset": offset,
    }
    return _finish(curve, cfg, ensemble.label, stats)


def geoment_experiment(
    cfg: ExperimentConfig, workers: int = 1, progress: Optional[bool] = None
) -> TailCurve:
    """
    Low geometric entanglement, ``X = n − E_g``, for states ``U|0…0⟩``.

    States with ``E_g`` close to ``n`` are too entangled to be useful for
    measurement-based computation; the bound caps the fraction that is not.
    """
    n = cfg.n_qubits
    if n > Config.GEOM_MAX_QUBITS:
        raise BudgetExceeded(f"E_g estimates stop at {Config.GEOM_MAX_QUBITS} qubits")
    stream = _stream(cfg)
    if cfg.ensemble.name == "haar" and cfg.ensemble.iterations == 1:
        ensemble, label = None, "haar"
    else:
        ensemble = resolve_ensemble(cfg.ensemble, d=2**n, rng=stream.derive(BUILD_STREAM))
        label = ensemble.label
    job = GeometricMeasureJob(ensemble, n, cfg.restarts)
    values = run_batches(
        job, cfg.samples, stream, cfg.batch_size, workers, cfg.kind, progress
    )[:, 0]
    k = cfg.design_k or n * n

    def bound(delta: float) -> BoundResult:
        return bounds.geom_ent_tail(n, k, delta, cfg.design_eps)

    curve = tail_compare(n - values, cfg.grid, bound, cfg.kind)
    useful = n - 2 * math.log2(n) - 3
    stats = {
        "mean_geometric_measure": values.mean(),
        "min_geometric_measure": values.min(),
        "fraction_too_entangled": np.mean(values > useful),
        "log2_corollary": bounds.geom_ent_corollary(n).log2_bound,
    }
    return _finish(curve, cfg, label, stats)


EXPERIMENTS: Dict[str, Callable[..., TailCurve]] = {
    "entropy": entropy_experiment,
    "tailcurve": purity_tail_experiment,
    "overlap": overlap_experiment,
    "statmech": statmech_experiment,
    "geoment": geoment_experiment,
}


def run(
    cfg: ExperimentConfig, workers: int = 1, progress: Optional[bool] = None
) -> TailCurve:
    logger.info(
        "running %s experiment: %s ensemble, %d samples, seed %s",
        cfg.kind,
        cfg.ensemble.name,
        cfg.samples,
        cfg.seed,
    )
    started = time.perf_counter()
    curve = EXPERIMENTS[cfg.kind](cfg, workers=workers, progress=progress)
    logger.info(
        "Experiment %s finished: %d samples in %.1fs (%s)",
        cfg.kind,
        curve.n_samples,
        time.perf_counter() - started,
        "pass" if curve.passed else "fail",
    )
    return curve


# ---------------------------------------------------------------------------
# Probes
# ---------------------------------------------------------------------------


def lipschitz_probe(
    dims: BipartiteDims, pairs: int = 1000, scale: float = 1e-2, rng: RngLike = None
) -> float:
    """
    Largest observed ``|Δ tr ψ_S²| / ‖ψ − φ‖₂`` over random state pairs.

    Half the pairs are independent; the other half are small perturbations
    that sample the local slope.
    """
    gen = as_generator(rng)
    far = pairs // 2
    psi = sample_haar_states(dims.d, pairs, gen)
    phi = sample_haar_states(dims.d, pairs, gen)
    near = psi[far:] + scale * phi[far:]
    phi[far:] = near / np.linalg.norm(near, axis=1, keepdims=True)
    delta = np.abs(
        batch_purities(batch_reduced_states(psi, dims))
        - batch_purities(batch_reduced_states(phi, dims))
    )
    distance = np.linalg.norm(psi - phi, axis=1)
    mask = distance > 0
    return float(np.max(delta[mask] / distance[mask]))
