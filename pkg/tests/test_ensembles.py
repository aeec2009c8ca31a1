"""
Tests for designlab/ensembles.py — builtin ensembles, iteration and JSON files.
"""

import json

import numpy as np
import pytest

from pydantic import ValidationError

from designlab.ensembles import (
    achieved_epsilon,
    clifford_ensemble,
    describe_ensemble,
    explicit_ensemble,
    haar_ensemble,
    iterate_ensemble,
    load_ensemble,
    local_haar_ensemble,
    materialize,
    orbit_states,
    pauli_ensemble,
    pmin,
    qubit_count,
    random_circuit_ensemble,
    required_iterations,
    resolve_ensemble,
    save_ensemble,
)
from designlab.errors import (
    BudgetExceeded,
    DimensionError,
    PreconditionError,
    UnknownNameError,
)
from designlab.models import EnsembleSpec, RngStream
from designlab.numkit import basis_state


def _all_unitary(stack: np.ndarray) -> bool:
    eye = np.eye(stack.shape[-1])
    return np.allclose(np.conj(np.swapaxes(stack, 1, 2)) @ stack, eye, atol=1e-10)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


class TestExplicitEnsemble:
    def test_uniform_weights_by_default(self):
        ensemble = explicit_ensemble(np.stack([np.eye(2), np.diag([1, -1])]))
        assert np.allclose(ensemble.weights, [0.5, 0.5])
        assert ensemble.explicit and ensemble.size == 2

    def test_non_unitary_element_rejected(self):
        with pytest.raises(ValidationError):
            explicit_ensemble(np.stack([np.eye(2), 2 * np.eye(2)]))

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            explicit_ensemble(np.stack([np.eye(2), np.eye(2)]), np.array([0.5, 0.6]))

    def test_negative_weight_rejected(self):
        with pytest.raises(ValidationError):
            explicit_ensemble(np.stack([np.eye(2), np.eye(2)]), np.array([1.5, -0.5]))

    def test_sampling_respects_weights(self):
        ensemble = explicit_ensemble(
            np.stack([np.eye(2), np.diag([1, -1])]), np.array([1.0, 0.0])
        )
        draws = ensemble.sample(20, 0)
        assert np.allclose(draws, np.eye(2))


class TestBuiltinEnsembles:
    def test_pauli_size(self):
        ensemble = pauli_ensemble(2)
        assert ensemble.size == 16
        assert _all_unitary(ensemble.unitaries)
        assert pmin(ensemble) == pytest.approx(1 / 16)

    def test_pauli_budget(self):
        with pytest.raises(BudgetExceeded):
            pauli_ensemble(7)

    def test_single_qubit_clifford_group_has_24_elements(self):
        ensemble = clifford_ensemble(1)
        assert ensemble.size == 24
        assert _all_unitary(ensemble.unitaries)

    def test_clifford_group_is_closed(self):
        elements = clifford_ensemble(1).unitaries
        product = elements[5] @ elements[17]
        overlaps = np.abs(np.einsum("nij,ij->n", elements.conj(), product)) / 2
        assert np.isclose(overlaps.max(), 1.0)

    def test_random_cliffords_are_unitary(self):
        ensemble = clifford_ensemble(3, "random")
        assert not ensemble.explicit
        assert _all_unitary(ensemble.sample(4, 1))

    def test_sampled_clifford_set_is_explicit(self):
        ensemble = clifford_ensemble(2, "random", samples=10, rng=3)
        assert ensemble.size == 10

    def test_local_haar_is_product(self, rng):
        draws = local_haar_ensemble(2).sample(3, rng)
        assert _all_unitary(draws)
        # a tensor product of 2x2 blocks has an operator Schmidt rank of one
        reshaped = draws[0].reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
        singular = np.linalg.svd(reshaped, compute_uv=False)
        assert np.sum(singular > 1e-10) == 1

    def test_random_circuit(self, rng):
        ensemble = random_circuit_ensemble(3, depth=4)
        assert _all_unitary(ensemble.sample(5, rng))

    def test_random_circuit_depth_zero_is_identity(self):
        ensemble = random_circuit_ensemble(2, depth=0)
        assert ensemble.explicit and np.allclose(ensemble.unitaries[0], np.eye(4))

    def test_random_circuit_needs_two_qubits(self):
        with pytest.raises(PreconditionError):
            random_circuit_ensemble(1, depth=3)

    def test_qubit_count(self):
        assert qubit_count(8) == 3
        with pytest.raises(DimensionError):
            qubit_count(6)


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------


class TestIterateEnsemble:
    def test_t1_is_identity_operation(self):
        base = pauli_ensemble(1)
        assert iterate_ensemble(base, 1) is base

    def test_iterated_draws_are_products(self):
        iterated = iterate_ensemble(pauli_ensemble(1), 3)
        assert iterated.t == 3 and not iterated.explicit
        assert _all_unitary(iterated.sample(10, 0))

    def test_materialize_counts_products(self):
        base = explicit_ensemble(np.stack([np.eye(2), np.diag([1, 1j])]))
        full = materialize(iterate_ensemble(base, 3))
        assert full.size == 8
        assert np.isclose(full.weights.sum(), 1.0)

    def test_materialize_budget(self):
        with pytest.raises(BudgetExceeded):
            materialize(iterate_ensemble(pauli_ensemble(2), 5), max_elements=1000)

    def test_invalid_t(self):
        with pytest.raises(PreconditionError):
            iterate_ensemble(pauli_ensemble(1), 0)


class TestRequiredIterations:
    def test_reaches_target(self):
        t = required_iterations(0.5, 2, 1, 1e-3)
        assert achieved_epsilon(0.5, t, 2, 1) <= 1e-3
        assert achieved_epsilon(0.5, t - 1, 2, 1) > 1e-3

    def test_lambda_must_contract(self):
        with pytest.raises(PreconditionError):
            required_iterations(1.0, 2, 1, 1e-3)


class TestOrbitStates:
    def test_pauli_orbit_of_zero_has_two_states(self):
        orbit = orbit_states(pauli_ensemble(1), basis_state(0, 2).amplitudes)
        assert len(orbit.kets) == 2
        assert np.allclose(sorted(orbit.weights), [0.5, 0.5])

    def test_needs_explicit_ensemble(self):
        with pytest.raises(PreconditionError):
            orbit_states(haar_ensemble(2), basis_state(0, 2).amplitudes)


# ---------------------------------------------------------------------------
# JSON I/O and name resolution
# ---------------------------------------------------------------------------


class TestEnsembleFiles:
    def test_save_then_load_preserves_elements(self, tmp_path):
        original = clifford_ensemble(1)
        path = save_ensemble(original, tmp_path / "c1.json")
        loaded = load_ensemble(path)
        assert np.array_equal(loaded.unitaries, original.unitaries)
        assert np.array_equal(loaded.weights, original.weights)
        assert loaded.provenance == "clifford"

    def test_generator_form_cannot_be_saved(self, tmp_path):
        with pytest.raises(PreconditionError):
            save_ensemble(haar_ensemble(2), tmp_path / "h.json")

    def test_wrong_entry_count(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(
            json.dumps({"d": 2, "weights": [1.0], "unitaries": [[[1.0, 0.0]] * 3]})
        )
        with pytest.raises(DimensionError):
            load_ensemble(path)

    def test_describe_reports_pmin(self):
        info = describe_ensemble(pauli_ensemble(1))
        assert info["size"] == 4
        assert info["pmin"] == pytest.approx(0.25)
        assert info["max_unitarity_residual"] < 1e-12


class TestResolveEnsemble:
    def test_numbered_names(self):
        assert resolve_ensemble(EnsembleSpec(name="pauli2")).d == 4
        assert resolve_ensemble(EnsembleSpec(name="clifford1")).size == 24

    def test_haar_needs_dimension(self):
        with pytest.raises(PreconditionError):
            resolve_ensemble(EnsembleSpec(name="haar"))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            resolve_ensemble(EnsembleSpec(name="pauli1"), d=4)

    def test_unknown_name(self):
        with pytest.raises(UnknownNameError):
            resolve_ensemble(EnsembleSpec(name="no-such-ensemble"), d=2)

    def test_sampled_clifford_depends_only_on_seed(self):
        spec = EnsembleSpec(name="clifford", d=8, samples=5)
        first = resolve_ensemble(spec, rng=RngStream(seed=4))
        second = resolve_ensemble(spec, rng=RngStream(seed=4))
        assert np.array_equal(first.unitaries, second.unitaries)

    def test_iterations_applied(self):
        ensemble = resolve_ensemble(EnsembleSpec(name="pauli1", iterations=2))
        assert ensemble.t == 2

    def test_loads_json_path(self, tmp_path):
        path = save_ensemble(pauli_ensemble(1), tmp_path / "p.json")
        assert resolve_ensemble(EnsembleSpec(name=str(path))).size == 4
