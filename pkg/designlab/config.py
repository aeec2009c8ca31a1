import os

from pathlib import Path


class Config:
    TITLE = "designlab"
    VERSION = "0.1.0"

    ROOT_DIR = Path(__file__).resolve().parent.parent
    PACKAGE_DIR = ROOT_DIR / "designlab"
    DATA_DIR = Path(os.environ.get("DESIGNLAB_DATA_DIR", ROOT_DIR / "data"))
    OUTPUT_DIR = DATA_DIR / "runs"
    RUNS_DB_PATH = DATA_DIR / "runs.db"

    SEED_ENV_VAR = "DESIGNLAB_SEED"
    SEED_LIMIT = 2**64

    # Dense-storage caps
    MAX_ENTRIES = 2**26
    MAX_STATE_DIM = 4096

    # Tolerances
    STATE_ATOL = 1e-12
    UNITARY_ATOL = 1e-10
    EIGEN_CLIP = 1e-10
    PURE_ATOL = 1e-8

    # Monte Carlo
    MC_SAMPLES = 100_000
    MC_BATCH = 2_000
    ACCEPT_SIGMA = 3.0
    FAIL_SIGMA = 4.0
    MIN_SAMPLES = 100

    # Ensembles
    MAX_PAULI_QUBITS = 6
    MAX_ENUMERATED_CLIFFORD_QUBITS = 2
    CIRCUIT_PAIRING = os.environ.get("DESIGNLAB_CIRCUIT_PAIRING", "adjacent")

    # Certification
    MONOMIAL_BUDGET = 10**7
    TPE_MAX_SPACE = 2**13
    POWER_TOL = 1e-8
    POWER_MAX_ITER = 10**4

    # Experiments
    WILSON_CONFIDENCE = 0.95
    GEOM_RESTARTS = 50
    GEOM_TOL = 1e-12
    GEOM_MAX_SWEEPS = 10**4
    GEOM_MAX_QUBITS = 12
    NET_BUDGET = 10**8
    NET_MAX_QUBITS = 3
