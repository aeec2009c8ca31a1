"""
Tests for designlab/experiments.py — constrained subspaces, tail comparison,
geometric entanglement and the experiment drivers.

Experiment runs use a few thousand samples; checks on means are stated in
standard errors with the 4σ failure threshold.
"""

import math

import numpy as np
import pytest

from designlab import bounds
from designlab.config import Config
from designlab.ensembles import haar_ensemble
from designlab.errors import (
    BudgetExceeded,
    InvariantViolation,
    PreconditionError,
)
from designlab.experiments import (
    EXPERIMENTS,
    ReducedStateJob,
    bloch_grid,
    canonical_state,
    constrained_subspace,
    effective_env_dim,
    embedding_isometry,
    geom_ent_estimate,
    geom_ent_net_certify,
    lipschitz_probe,
    run,
    run_batches,
    tail_compare,
    tightest,
    vacuous_bound,
    wilson_upper,
)
from designlab.haar import sample_haar, sample_haar_states
from designlab.models import BipartiteDims, ConstraintSpec, RngStream, TailCurve
from designlab.numkit import bell_state, ghz_state, product_state, pure_state

from tests.conftest import make_dims, make_experiment_config


def _within(stats: dict, mean_key: str, se_key: str, expected: float) -> bool:
    return abs(stats[mean_key] - expected) < Config.FAIL_SIGMA * stats[se_key]


# ---------------------------------------------------------------------------
# Constrained subspaces
# ---------------------------------------------------------------------------


class TestConstrainedSubspace:
    def test_full_space_canonical_state_is_maximally_mixed(self):
        c = ConstraintSpec(d_S=2, d_E=4, d_R=8)
        assert np.allclose(canonical_state(c).matrix, np.eye(2) / 2)
        assert effective_env_dim(c) == pytest.approx(4.0)

    def test_first_basis_embedding(self):
        c = ConstraintSpec(d_S=2, d_E=4, d_R=3)
        isometry = embedding_isometry(c)
        assert isometry.shape == (8, 3)
        assert np.allclose(isometry.conj().T @ isometry, np.eye(3))

    def test_random_subspace_is_reproducible(self):
        c = ConstraintSpec(d_S=2, d_E=4, d_R=5, embedding="random-subspace", seed=3)
        assert np.array_equal(embedding_isometry(c), embedding_isometry(c))
        omega = canonical_state(c)
        assert np.trace(omega.matrix).real == pytest.approx(1.0)

    def test_energy_window_selects_basis_states(self):
        energies = [0.0, 1.0, 2.0, 3.0, 0.5, 1.5, 2.5, 3.5]
        c = ConstraintSpec(
            d_S=2, d_E=4, embedding="energy-window", energies=energies, window=(1.0, 2.0)
        )
        assert c.d_R == 3
        assert embedding_isometry(c).shape == (8, 3)

    def test_explicit_columns_must_be_orthonormal(self):
        column = [[1.0, 0.0]] + [[0.0, 0.0]] * 3
        c = ConstraintSpec(d_S=2, d_E=2, embedding="explicit", columns=[column, column])
        with pytest.raises(InvariantViolation):
            constrained_subspace(c)

    def test_d_r_bounded_by_total_dimension(self):
        with pytest.raises(ValueError):
            ConstraintSpec(d_S=2, d_E=2, d_R=5)


# ---------------------------------------------------------------------------
# Tail comparison
# ---------------------------------------------------------------------------


def _constant(value: float):
    """A bound evaluator returning ``value`` everywhere."""
    return lambda _: bounds.markov_purity_tail(1.0 / value)


class TestWilsonUpper:
    def test_zero_hits_floor(self):
        z2 = 1.6448536269514722**2
        assert wilson_upper(np.array([0]), 100)[0] == pytest.approx(z2 / (100 + z2))

    def test_all_hits_is_one(self):
        assert wilson_upper(np.array([50]), 50)[0] == pytest.approx(1.0)

    def test_above_point_estimate(self):
        assert wilson_upper(np.array([30]), 100)[0] > 0.3

    def test_shrinks_with_more_samples(self):
        small = wilson_upper(np.array([30]), 100)[0]
        large = wilson_upper(np.array([120]), 400)[0]
        assert 0.3 < large < small


class TestTailCompare:
    samples = np.arange(100) / 100.0

    def test_empirical_upper_tail(self):
        curve = tail_compare(self.samples, [0.0, 0.5, 0.99], _constant(0.9))
        assert curve.empirical == pytest.approx([1.0, 0.5, 0.01])
        assert curve.n_samples == 100

    def test_loose_bound_passes(self):
        curve = tail_compare(self.samples, [0.5, 0.9], _constant(0.9))
        assert curve.point_pass == [True, True]
        assert curve.passed

    def test_violated_bound_fails(self):
        curve = tail_compare(self.samples, [0.5], _constant(0.1))
        assert curve.point_pass == [False]
        assert not curve.passed

    def test_vacuous_points_are_skipped(self):
        vacuous = lambda g: vacuous_bound("x", {}, "test")  # noqa: E731
        curve = tail_compare(self.samples, [0.5], vacuous)
        assert curve.point_pass == [None]
        assert curve.passed

    def test_unresolvable_points_warn(self):
        curve = tail_compare(self.samples, [2.0], _constant(1e-6))
        assert curve.point_pass == [None]
        assert curve.passed
        assert any("floor" in w for w in curve.warnings)

    def test_point_rule_is_documented(self):
        text = TailCurve.model_fields["point_pass"].description
        assert "floor" in text
        assert ">= 1" in text

    def test_empirical_tail_is_monotone(self, rng):
        curve = tail_compare(rng.random(500), [0.1, 0.3, 0.6, 0.9], _constant(0.99))
        assert curve.empirical == sorted(curve.empirical, reverse=True)

    def test_gaussian_within_subgaussian_profile(self, rng):
        # P(|X| ≥ t) ≤ 2 exp(−t²/2) for a standard normal X
        def profile(t):
            return bounds.markov_purity_tail(math.exp(t * t / 2) / 2)

        samples = np.abs(rng.standard_normal(10_000))
        curve = tail_compare(samples, [0.5, 1, 2, 3], profile)
        assert curve.passed
        assert curve.point_pass[0] is None

    def test_empty_samples(self):
        with pytest.raises(PreconditionError):
            tail_compare(np.array([]), [0.5], _constant(0.5))

    def test_tightest_keeps_warnings(self):
        loose = bounds.entropy_tail_haar(BipartiteDims(d_S=2, d_E=8), 0.5)
        tight = bounds.markov_entropy_tail(10.0)
        best = tightest([loose, tight])
        assert best.name == tight.name
        assert best.warnings == loose.warnings


# ---------------------------------------------------------------------------
# Batch execution
# ---------------------------------------------------------------------------


class TestRunBatches:
    def _job(self):
        dims = make_dims(2, 2)
        ket0 = np.eye(4, dtype=complex)[0]
        return ReducedStateJob(haar_ensemble(4), dims, ket0)

    def test_shape_and_columns(self):
        columns = run_batches(self._job(), 250, RngStream(seed=1), batch_size=100)
        assert columns.shape == (250, 4)
        entropy, renyi2 = columns[:, 0], columns[:, 1]
        assert np.all(renyi2 <= entropy + 1e-9)

    def test_independent_of_worker_count(self):
        serial = run_batches(self._job(), 300, RngStream(seed=2), batch_size=100)
        parallel = run_batches(
            self._job(), 300, RngStream(seed=2), batch_size=100, workers=2
        )
        assert np.array_equal(serial, parallel)

    def test_seed_changes_draws(self):
        a = run_batches(self._job(), 50, RngStream(seed=3), batch_size=50)
        b = run_batches(self._job(), 50, RngStream(seed=4), batch_size=50)
        assert not np.array_equal(a, b)


# ---------------------------------------------------------------------------
# Geometric measure of entanglement
# ---------------------------------------------------------------------------


class TestGeomEntEstimate:
    def test_product_state_is_unentangled(self):
        state = product_state([[1, 1], [1, 0], [1, 1j]])
        estimate = geom_ent_estimate(state, 3, restarts=5, rng=0)
        assert estimate.value == pytest.approx(0.0, abs=1e-9)

    def test_bell_state(self):
        estimate = geom_ent_estimate(bell_state(), 2, restarts=5, rng=1)
        assert estimate.value == pytest.approx(1.0, abs=1e-6)

    def test_ghz_state(self):
        estimate = geom_ent_estimate(ghz_state(3), 3, restarts=20, rng=2)
        assert estimate.value == pytest.approx(1.0, abs=1e-6)

    def test_w_state(self):
        w = pure_state([0, 1, 1, 0, 1, 0, 0, 0], normalize=True)
        estimate = geom_ent_estimate(w, 3, restarts=20, rng=3)
        assert estimate.value == pytest.approx(math.log2(9 / 4), abs=1e-6)

    def test_local_unitary_invariance(self):
        w = pure_state([0, 1, 1, 0, 1, 0, 0, 0], normalize=True).amplitudes
        local = [sample_haar(2, seed) for seed in (11, 12, 13)]
        rotated = np.kron(np.kron(local[0], local[1]), local[2]) @ w
        before = geom_ent_estimate(w, 3, restarts=20, rng=5)
        after = geom_ent_estimate(rotated, 3, restarts=20, rng=6)
        assert after.value == pytest.approx(before.value, abs=1e-8)

    def test_witness_factors_are_normalized(self):
        estimate = geom_ent_estimate(ghz_state(3), 3, restarts=5, rng=4)
        assert np.allclose(np.linalg.norm(estimate.witness, axis=1), 1.0)

    def test_qubit_cap(self):
        with pytest.raises(BudgetExceeded):
            geom_ent_estimate(np.ones(2), Config.GEOM_MAX_QUBITS + 1)


class TestBlochGrid:
    def test_covers_the_sphere(self, rng):
        step = 0.3
        grid = bloch_grid(step)
        points = rng.standard_normal((500, 2)) + 1j * rng.standard_normal((500, 2))
        points /= np.linalg.norm(points, axis=1, keepdims=True)
        fidelity = np.abs(points @ grid.conj().T) ** 2
        # Bloch angle θ between qubit states satisfies |⟨a|b⟩|² = cos²(θ/2)
        angles = 2 * np.arccos(np.sqrt(np.clip(fidelity.max(axis=1), 0, 1)))
        assert angles.max() <= step + 1e-9


class TestNetCertificate:
    def test_bell_interval(self):
        cert = geom_ent_net_certify(bell_state(), 2, 0.05)
        assert cert.lower <= 0.5 <= cert.upper
        assert cert.upper - cert.lower <= 0.05 + 1e-12
        low, high = cert.entanglement
        assert low <= 1.0 <= high

    def test_product_state(self):
        cert = geom_ent_net_certify(product_state([[1, 0], [1, 0]]), 2, 0.1)
        assert cert.lower == pytest.approx(1.0)

    def test_ghz_three_qubits(self):
        cert = geom_ent_net_certify(ghz_state(3), 3, 0.1)
        assert cert.lower == pytest.approx(0.5, abs=1e-9)
        assert cert.log2_net_size == pytest.approx(bounds.net_size(0.1, 3))

    def test_random_state_brackets_optimizer(self):
        psi = sample_haar_states(4, 1, 17)[0]
        cert = geom_ent_net_certify(psi, 2, 0.05)
        estimate = geom_ent_estimate(psi, 2, restarts=10, rng=18)
        assert cert.lower - 1e-9 <= estimate.overlap <= cert.upper

    def test_single_qubit(self):
        cert = geom_ent_net_certify(np.array([1.0, 0.0]), 1, 0.1)
        assert (cert.lower, cert.upper) == (1.0, 1.0)

    def test_qubit_cap(self):
        with pytest.raises(BudgetExceeded):
            geom_ent_net_certify(np.ones(16) / 4, 4, 0.1)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


class TestEntropyExperiment:
    def test_haar_mean_purity(self):
        curve = run(make_experiment_config())
        assert curve.kind == "entropy"
        assert curve.seed == 7
        assert curve.ensemble == "haar"
        assert _within(curve.stats, "mean_purity", "purity_se", 2 / 3)
        assert curve.stats["mean_renyi2"] <= curve.stats["mean_entropy"]

    def test_reproducible(self):
        first = run(make_experiment_config(samples=500))
        second = run(make_experiment_config(samples=500))
        assert first.model_dump() == second.model_dump()

    def test_sampled_cliffords_match_haar_purity(self):
        cfg = make_experiment_config(ensemble={"name": "clifford"}, samples=1_000)
        curve = run(cfg)
        assert _within(curve.stats, "mean_purity", "purity_se", 2 / 3)

    def test_needs_resolved_seed(self):
        with pytest.raises(PreconditionError):
            run(make_experiment_config(seed=None))

    def test_dimension_budget(self):
        cfg = make_experiment_config(dims={"d_S": 64, "d_E": 128}, samples=100)
        with pytest.raises(BudgetExceeded):
            run(cfg)


class TestPurityTailExperiment:
    def test_design_curve_passes_for_haar(self):
        cfg = make_experiment_config(
            kind="tailcurve",
            dims={"d_S": 4, "d_E": 4},
            samples=5_000,
            grid=[0.05, 0.1, 0.2],
            design_k=8,
        )
        curve = run(cfg)
        assert curve.passed
        assert _within(curve.stats, "mean_purity", "purity_se", 8 / 17)

    def test_levy_without_design_claim(self):
        cfg = make_experiment_config(kind="tailcurve", samples=500, grid=[0.1])
        curve = run(cfg)
        assert curve.bound == [1.0]
        assert curve.point_pass == [None]


class TestOverlapExperiment:
    def test_haar_overlaps(self):
        cfg = make_experiment_config(
            kind="overlap", samples=4_000, grid=[0.25, 0.5, 0.75], design_k=2
        )
        curve = run(cfg)
        assert curve.passed
        assert curve.stats["expected_overlap"] == pytest.approx(1 / 8)
        assert abs(curve.stats["mean_overlap"] - 1 / 8) < 0.02


class TestStatmechExperiment:
    def _config(self, d_R: int):
        return make_experiment_config(
            kind="statmech",
            dims=None,
            constraint={
                "d_S": 2,
                "d_E": 16,
                "d_R": d_R,
                "embedding": "random-subspace",
                "seed": 5,
            },
            samples=2_000,
            grid=[0.1, 0.5, 1.0],
        )

    def test_distance_shrinks_with_subspace_dimension(self):
        small = run(self._config(16))
        large = run(self._config(32))
        assert large.stats["mean_distance"] < small.stats["mean_distance"]

    def test_stats(self):
        curve = run(self._config(32))
        assert curve.stats["d_eff"] == pytest.approx(16.0)
        assert curve.stats["offset"] == pytest.approx(math.sqrt(2 / 16))
        assert curve.passed


class TestGeomentExperiment:
    def test_haar_states(self):
        cfg = make_experiment_config(
            kind="geoment",
            dims=None,
            n_qubits=3,
            samples=100,
            batch_size=50,
            restarts=5,
            grid=[0.5, 1.0, 2.0],
        )
        curve = run(cfg)
        assert curve.kind == "geoment"
        assert 0.0 < curve.stats["mean_geometric_measure"] < 3.0
        assert curve.stats["log2_corollary"] == pytest.approx(1 - 9 * math.log2(3))
        assert curve.passed


class TestDispatch:
    def test_every_kind_registered(self):
        kinds = {"entropy", "statmech", "geoment", "tailcurve", "overlap"}
        assert set(EXPERIMENTS) == kinds


class TestLipschitzProbe:
    def test_purity_slope_is_bounded(self):
        slope = lipschitz_probe(BipartiteDims(d_S=2, d_E=4), pairs=400, rng=0)
        assert 0.0 < slope <= 2 * bounds.purity_lipschitz()
