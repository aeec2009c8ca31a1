"""
Business layer shared by the command line and the HTTP API.
"""

import csv
import hashlib
import json
import logging
import math
import os

from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, NamedTuple, Optional, Tuple

import numpy as np

from pydantic import BaseModel, ConfigDict, Field, model_validator

from designlab import bounds, experiments
from designlab.certify import certify_unitary_design, tpe_spec
from designlab.config import Config
from designlab.db import record_run
from designlab.ensembles import (
    describe_ensemble,
    load_ensemble,
    materialize,
    resolve_ensemble,
    save_ensemble,
)
from designlab.errors import PreconditionError, UnknownNameError
from designlab.models import (
    BipartiteDims,
    BoundResult,
    CertifyRequest,
    CertReport,
    DesignSpec,
    EnsembleSpec,
    ExperimentConfig,
    LipschitzFn,
    MomentBound,
    PolynomialSpec,
    RngStream,
    TailCurve,
    TailProfile,
)


logger = logging.getLogger(__name__)

# Ensemble construction draws use a stream that Monte Carlo batches never reach
BUILD_STREAM = experiments.BUILD_STREAM


# ---------------------------------------------------------------------------
# Bound parameter models (field names double as CLI flags)
# ---------------------------------------------------------------------------


class BoundParams(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LevyParams(BoundParams):
    eta: float = Field(gt=0)
    d: int = Field(gt=0)
    delta: float = Field(gt=0)


class ProfileParams(BoundParams):
    C: float = Field(ge=0)
    a: float = Field(gt=0)
    mu: float = 0.0

    @property
    def profile(self) -> TailProfile:
        return TailProfile(C=self.C, a=self.a, mu=self.mu)


class PolyParams(ProfileParams):
    K: int = Field(gt=0)
    alpha: float = Field(gt=0)
    eps: float = Field(default=0.0, ge=0)
    d: int = Field(gt=0)
    k: int = Field(gt=0)
    delta: float = Field(gt=0)
    m: Optional[int] = Field(default=None, gt=0)


class MomentParams(ProfileParams):
    m: float = Field(gt=0)


class ShiftedMomentParams(MomentParams):
    eta_shift: float = Field(ge=0)


class GapParams(BoundParams):
    K: int = Field(gt=0)
    alpha: float = Field(gt=0)
    mu: float = 0.0
    eps: float = Field(ge=0)
    d: int = Field(gt=0)
    k: int = Field(gt=0)
    m: int = Field(gt=0)


class EntropyHaarParams(BoundParams):
    ds: int = Field(gt=0)
    de: int = Field(gt=0)
    alpha: float = Field(gt=0)


class EntropyDesignParams(BoundParams):
    n: int = Field(gt=0)
    ds: int = Field(gt=0)
    alpha: float = Field(gt=0)


class EntropyMessyParams(BoundParams):
    mu: float = Field(gt=0)
    alpha: float = Field(gt=0)
    m: int = Field(gt=0)
    eps: float = Field(default=0.0, ge=0)
    d: int = Field(gt=0)
    k: int = Field(gt=0)


class EntropyChainParams(BoundParams):
    ds: int = Field(gt=0)
    d: int = Field(gt=0)
    k: int = Field(gt=0)
    alpha: float = Field(gt=0)
    eps: Optional[float] = Field(default=None, ge=0)


class StatmechHaarParams(BoundParams):
    ds: int = Field(gt=0)
    dr: int = Field(gt=0)
    deff: float = Field(gt=0)
    eps: float = Field(ge=0)


class StatmechDesignParams(BoundParams):
    ds: int = Field(gt=0)
    dr: int = Field(gt=0)
    delta: float = Field(gt=0)
    k: int = Field(gt=0)
    eps: float = Field(default=0.0, ge=0)
    mode: Literal["simplified", "messy"] = "simplified"
    m: Optional[int] = Field(default=None, gt=0)


class OverlapParams(BoundParams):
    d: int = Field(gt=0)
    delta: float = Field(gt=0)
    m: int = Field(gt=0)
    eps: float = Field(default=0.0, ge=0)
    k: Optional[int] = Field(default=None, gt=0)


class GeomentParams(BoundParams):
    n: int = Field(gt=0)
    k: int = Field(gt=0)
    delta: float
    eps: float = Field(default=0.0, ge=0)


class NetSizeParams(BoundParams):
    gamma: float = Field(gt=0)
    n: int = Field(gt=0)


class MarkovParams(BoundParams):
    gamma: Optional[float] = Field(default=None, gt=0)
    alpha: Optional[float] = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.gamma is None) == (self.alpha is None):
            raise ValueError("give exactly one of gamma (purity) or alpha (entropy)")
        return self


class PminParams(BoundParams):
    ensemble: str
    d: Optional[int] = Field(default=None, gt=0)


def _from_moment(name: str, inputs: Dict[str, Any], moment: MomentBound) -> BoundResult:
    extras = {} if moment.loose_value is None else {"loose_value": moment.loose_value}
    return BoundResult(
        name=name,
        inputs=inputs,
        bound=moment.value,
        raw=moment.value,
        log2_bound=moment.log_value / bounds.LN2,
        clamped=False,
        extras=extras,
    )


def _from_log2(name: str, inputs: Dict[str, Any], log2_value: float) -> BoundResult:
    value = 2.0**log2_value if log2_value < 1024 else math.inf
    return BoundResult(
        name=name,
        inputs=inputs,
        bound=value,
        raw=value,
        log2_bound=log2_value,
        clamped=False,
    )


def _pmin(p: PminParams) -> BoundResult:
    ensemble = resolve_ensemble(EnsembleSpec(name=p.ensemble, d=p.d))
    value = bounds.pmin_floor(ensemble)
    return _from_log2("pmin", p.model_dump(), math.log2(value))


def _markov(p: MarkovParams) -> BoundResult:
    if p.gamma is not None:
        return bounds.markov_purity_tail(p.gamma)
    return bounds.markov_entropy_tail(p.alpha)


def _moment(p: MomentParams) -> BoundResult:
    return _from_moment("moment", p.model_dump(), bounds.moment_from_tail(p.profile, p.m))


def _shifted_moment(p: ShiftedMomentParams) -> BoundResult:
    profile = TailProfile(C=p.C, a=p.a, mu=p.mu, eta_shift=p.eta_shift)
    moment = bounds.shifted_moment_from_tail(profile, p.m)
    return _from_moment("shifted-moment", p.model_dump(), moment)


def _gap(p: GapParams) -> BoundResult:
    poly = PolynomialSpec(K=p.K, alpha=p.alpha)
    moment = bounds.design_moment_gap(poly, p.mu, p.eps, p.d, p.k, p.m)
    return _from_moment("gap", p.model_dump(), moment)


class BoundEntry(NamedTuple):
    params: type
    evaluate: Callable[[Any], BoundResult]
    summary: str


BOUNDS: Dict[str, BoundEntry] = {
    "levy": BoundEntry(
        LevyParams,
        lambda p: bounds.levy_bound(LipschitzFn(eta=p.eta), p.d, p.delta),
        "Lévy concentration for an η-Lipschitz function on U(d)",
    ),
    "poly": BoundEntry(
        PolyParams,
        lambda p: bounds.poly_tail_design(
            p.profile, PolynomialSpec(K=p.K, alpha=p.alpha), p.eps, p.d, p.k, p.delta, p.m
        ),
        "polynomial tail under an ε-approximate k-design",
    ),
    "moment": BoundEntry(
        MomentParams,
        _moment,
        "m-th central moment implied by a sub-Gaussian tail",
    ),
    "shifted-moment": BoundEntry(
        ShiftedMomentParams,
        _shifted_moment,
        "m-th moment implied by a tail that starts past a shift",
    ),
    "gap": BoundEntry(GapParams, _gap, "extra moment an ε-approximate design may carry"),
    "markov": BoundEntry(
        MarkovParams, _markov, "Markov tail for purity (gamma) or entropy (alpha)"
    ),
    "entropy-haar": BoundEntry(
        EntropyHaarParams,
        lambda p: bounds.entropy_tail_haar(BipartiteDims(d_S=p.ds, d_E=p.de), p.alpha),
        "low entanglement entropy of Haar-random states",
    ),
    "entropy-design": BoundEntry(
        EntropyDesignParams,
        lambda p: bounds.entropy_tail_design(p.n, p.ds, p.alpha),
        "low entanglement entropy of n-qubit design states",
    ),
    "entropy-messy": BoundEntry(
        EntropyMessyParams,
        lambda p: bounds.entropy_tail_design_messy(p.mu, p.alpha, p.m, p.eps, p.d, p.k),
        "low entanglement entropy, general moment form",
    ),
    "entropy-chain": BoundEntry(
        EntropyChainParams,
        lambda p: bounds.entropy_tail_design_chain(p.ds, p.d, p.k, p.alpha, p.eps),
        "low entanglement entropy, intermediate simplification",
    ),
    "statmech-haar": BoundEntry(
        StatmechHaarParams,
        lambda p: bounds.statmech_tail_haar(p.ds, p.dr, p.deff, p.eps),
        "distance from the canonical state, Haar",
    ),
    "statmech-design": BoundEntry(
        StatmechDesignParams,
        lambda p: bounds.statmech_tail_design(
            p.ds, p.dr, p.delta, p.k, p.eps, p.mode, p.m
        ),
        "distance from the canonical state, k-design",
    ),
    "overlap": BoundEntry(
        OverlapParams,
        lambda p: bounds.overlap_tail(p.d, p.delta, p.m, p.eps, p.k),
        "fidelity with a fixed state under a state design",
    ),
    "geoment": BoundEntry(
        GeomentParams,
        lambda p: bounds.geom_ent_tail(p.n, p.k, p.delta, p.eps),
        "low geometric entanglement under a k-design; extras.log2_corollary holds "
        "log2 of the closed form 2·n^(-n²)",
    ),
    "netsize": BoundEntry(
        NetSizeParams,
        lambda p: _from_log2("netsize", p.model_dump(), bounds.net_size(p.gamma, p.n)),
        "size of a γ-net over n-qubit product states",
    ),
    "pmin": BoundEntry(
        PminParams, _pmin, "smallest nonzero probability of an explicit ensemble"
    ),
}


def evaluate_bound(name: str, params: Dict[str, Any]) -> BoundResult:
    """Validate ``params`` against the bound's model and evaluate it."""
    entry = BOUNDS.get(name)
    if entry is None:
        raise UnknownNameError(f"unknown bound {name!r}; choose from {sorted(BOUNDS)}")
    parsed = entry.params.model_validate(params)
    result = entry.evaluate(parsed)
    logger.debug("bound %s(%s) = %s", name, params, result.bound)
    return result


def bound_schemas() -> Dict[str, Dict[str, Any]]:
    return {
        name: {"summary": entry.summary, "params": entry.params.model_json_schema()}
        for name, entry in BOUNDS.items()
    }


# ---------------------------------------------------------------------------
# Seeds and config hashes
# ---------------------------------------------------------------------------


def resolve_seed(explicit: Optional[int] = None) -> int:
    """The flag if given, then ``DESIGNLAB_SEED``, then fresh OS entropy."""
    if explicit is not None:
        return _check_seed(explicit, "seed")
    env = os.environ.get(Config.SEED_ENV_VAR)
    if env:
        try:
            seed = int(env)
        except ValueError:
            raise PreconditionError(f"{Config.SEED_ENV_VAR}={env!r} is not an integer")
        return _check_seed(seed, Config.SEED_ENV_VAR)
    return int(np.random.SeedSequence().entropy % Config.SEED_LIMIT)


def _check_seed(seed: int, source: str) -> int:
    if not 0 <= seed < Config.SEED_LIMIT:
        raise PreconditionError(f"{source} must lie in [0, 2**64), got {seed}")
    return seed


def config_hash(cfg: BaseModel | Dict[str, Any]) -> str:
    """First 16 hex chars of SHA-256 over the canonical JSON of ``cfg``."""
    if isinstance(cfg, BaseModel):
        payload = cfg.model_dump(mode="json", exclude={"output_dir"})
    else:
        payload = cfg
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


CSV_COLUMNS = ["threshold", "empirical", "wilson_upper", "bound", "log2_bound", "pass"]


def _artifact_stem(kind: str, seed: Optional[int], digest: Optional[str]) -> str:
    return f"{kind}-seed{seed}-{digest}"


def write_tail_curve(curve: TailCurve, out_dir: Path) -> Tuple[Path, Path]:
    """Write ``<kind>-seed<seed>-<hash>.csv`` and ``.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = _artifact_stem(curve.kind, curve.seed, curve.config_hash)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"

    with csv_path.open("w", encoding="utf-8", newline="") as f:
        f.write(
            f"# designlab {curve.version} kind={curve.kind} seed={curve.seed} "
            f"config_hash={curve.config_hash}\n"
        )
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for i, threshold in enumerate(curve.grid):
            flag = curve.point_pass[i]
            writer.writerow(
                {
                    "threshold": repr(threshold),
                    "empirical": repr(curve.empirical[i]),
                    "wilson_upper": repr(curve.wilson_upper[i]),
                    "bound": repr(curve.bound[i]),
                    "log2_bound": repr(curve.log2_bound[i]),
                    "pass": "" if flag is None else str(flag).lower(),
                }
            )
    json_path.write_text(curve.model_dump_json(indent=2) + "\n")
    return csv_path, json_path


def write_report(report: CertReport, out_dir: Path) -> Path:
    """Write ``certify-seed<seed>-<hash>.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = _artifact_stem("certify", report.seed, report.config_hash)
    path = out_dir / f"{stem}.json"
    path.write_text(report.model_dump_json(indent=2) + "\n")
    return path


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def run_certification(
    request: CertifyRequest, output_dir: Optional[Path] = None, record: bool = True
) -> Tuple[CertReport, Optional[Path]]:
    """Certify the requested ensemble; optionally write the report and log the run."""
    seed = resolve_seed(request.seed)
    request = request.model_copy(update={"seed": seed})
    stream = RngStream(seed=seed)
    ensemble = resolve_ensemble(request.ensemble, rng=stream.derive(BUILD_STREAM))
    spec = DesignSpec(d=ensemble.d, k=request.k, eps=request.eps)
    report = certify_unitary_design(
        ensemble, spec, request.strategy, request.n_monomials, request.samples, stream
    )
    digest = config_hash(request)
    report = report.model_copy(update={"seed": seed, "config_hash": digest})
    path = write_report(report, output_dir) if output_dir is not None else None
    if record:
        record_run(
            "certify",
            kind=report.mode,
            seed=seed,
            config_hash=digest,
            passed=report.passed,
            json_path=str(path) if path else None,
        )
    return report, path


def load_experiment_config(
    path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None
) -> ExperimentConfig:
    """Read a JSON config file; non-None ``overrides`` win over file values."""
    data: Dict[str, Any] = json.loads(Path(path).read_text()) if path else {}
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig.model_validate(data)


def run_experiment(
    cfg: ExperimentConfig,
    workers: int = 1,
    progress: Optional[bool] = None,
    record: bool = True,
) -> Tuple[TailCurve, Path, Path]:
    """Run one experiment, write its CSV/JSON artifacts and log the run."""
    seed = resolve_seed(cfg.seed)
    cfg = cfg.model_copy(update={"seed": seed})
    digest = config_hash(cfg)
    curve = experiments.run(cfg, workers=workers, progress=progress)
    curve = curve.model_copy(update={"config_hash": digest})
    out_dir = Path(cfg.output_dir) if cfg.output_dir else Config.OUTPUT_DIR
    csv_path, json_path = write_tail_curve(curve, out_dir)
    if record:
        record_run(
            "experiment",
            kind=cfg.kind,
            seed=seed,
            config_hash=digest,
            passed=curve.passed,
            csv_path=str(csv_path),
            json_path=str(json_path),
        )
    return curve, csv_path, json_path


# ---------------------------------------------------------------------------
# Ensemble files and raw samples
# ---------------------------------------------------------------------------


def describe_named(spec: EnsembleSpec, seed: Optional[int] = None) -> Dict[str, Any]:
    """Describe a builtin or saved ensemble, with its TPE spec when cheap."""
    rng = RngStream(seed=resolve_seed(seed)).derive(BUILD_STREAM)
    ensemble = resolve_ensemble(spec, rng=rng)
    info = describe_ensemble(ensemble)
    if ensemble.explicit and ensemble.d**2 <= Config.TPE_MAX_SPACE:
        info["tpe_k1"] = tpe_spec(ensemble, 1).model_dump()
    return info


def save_named(spec: EnsembleSpec, path: Path, seed: Optional[int] = None) -> Path:
    """Materialize a builtin ensemble and save it as JSON."""
    seed = resolve_seed(seed)
    rng = RngStream(seed=seed).derive(BUILD_STREAM)
    digest = config_hash({"ensemble": spec.model_dump(mode="json"), "seed": seed})
    meta = {"version": Config.VERSION, "seed": seed, "config_hash": digest}
    return save_ensemble(materialize(resolve_ensemble(spec, rng=rng)), path, meta)


def load_named(path: Path) -> Dict[str, Any]:
    return describe_ensemble(load_ensemble(path))


def _pairs(array: np.ndarray) -> List[Any]:
    return np.stack([array.real, array.imag], axis=-1).tolist()


def sample_payload(
    spec: EnsembleSpec, n: int, states: bool = False, seed: Optional[int] = None
) -> Dict[str, Any]:
    """``n`` draws as nested ``[re, im]`` lists; states are ``U|0…0⟩``."""
    if n < 1:
        raise PreconditionError("need at least one sample")
    seed = resolve_seed(seed)
    stream = RngStream(seed=seed)
    ensemble = resolve_ensemble(spec, rng=stream.derive(BUILD_STREAM))
    draws = ensemble.sample(n, stream)
    items = draws[:, :, 0] if states else draws
    request = {
        "ensemble": spec.model_dump(mode="json"),
        "n": n,
        "states": states,
        "seed": seed,
    }
    return {
        "d": ensemble.d,
        "ensemble": ensemble.label,
        "kind": "states" if states else "unitaries",
        "seed": seed,
        "version": Config.VERSION,
        "config_hash": config_hash(request),
        "items": _pairs(items),
    }
