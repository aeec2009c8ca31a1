"""
Closed-form large-deviation bounds for Haar measure and approximate designs.

Every evaluator works in natural-log space and only exponentiates at the end,
because ``d^k`` and ``ε / d^k`` leave double range almost immediately.  Each
returns a ``BoundResult`` carrying the clamped probability bound, the raw
value (possibly above 1, or ``inf``), ``log2_bound`` of the raw value and any
precondition warnings.  A result below the smallest subnormal double is
reported as ``bound = 0`` with the exact ``log2_bound``.

The concentration constants are computed from π on every call.
"""

from __future__ import annotations

import math

from typing import Any, Dict, List, Optional

import numpy as np

from scipy.special import gammaln

from designlab.ensembles import UnitaryEnsemble, pmin
from designlab.errors import InvariantViolation, PreconditionError
from designlab.models import (
    BipartiteDims,
    BoundResult,
    LipschitzFn,
    MomentBound,
    PolynomialSpec,
    TailProfile,
)
from designlab.numkit import DensityMatrix


LN2 = math.log(2.0)
_LOG_MIN = -1074 * LN2


def c1() -> float:
    """Levy-lemma constant ``2 / (9π³)``."""
    return 2.0 / (9.0 * math.pi**3)


def c2() -> float:
    """Canonical-typicality constant ``1 / (18π³)``."""
    return 1.0 / (18.0 * math.pi**3)


def c_entropy() -> float:
    """Haar entropy-concentration constant ``1 / (8π²)``."""
    return 1.0 / (8.0 * math.pi**2)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _result(
    name: str,
    inputs: Dict[str, Any],
    log_raw: float,
    warnings: Optional[List[str]] = None,
    extras: Optional[Dict[str, Any]] = None,
) -> BoundResult:
    raw = math.exp(log_raw) if log_raw < 709.0 else math.inf
    if log_raw <= _LOG_MIN:
        bound = 0.0
    else:
        bound = math.exp(min(log_raw, 0.0))
    return BoundResult(
        name=name,
        inputs=inputs,
        bound=bound,
        raw=raw,
        log2_bound=log_raw / LN2,
        clamped=log_raw > 0.0,
        warnings=warnings or [],
        extras=extras or {},
    )


def _log_sum(*terms: float) -> float:
    return float(np.logaddexp.reduce(np.array(terms, dtype=float)))


def _log_pow2_minus_1(alpha: float) -> float:
    """``ln(2^α − 1)`` without overflow."""
    if alpha * LN2 > 30.0:
        return alpha * LN2 + math.log1p(-math.exp(-alpha * LN2))
    return _log(math.expm1(alpha * LN2))


# ---------------------------------------------------------------------------
# Generic tail and moment tools
# ---------------------------------------------------------------------------


def levy_bound(f: LipschitzFn, d: int, delta: float) -> BoundResult:
    """``4 exp(−C₁ d δ² / η²)`` for an ``η``-Lipschitz function on U(d)."""
    log_raw = math.log(4.0) - c1() * d * delta**2 / f.eta**2
    return _result("levy", {"eta": f.eta, "d": d, "delta": delta}, log_raw)


def purity_lipschitz() -> float:
    """Lipschitz constant of ``U ↦ tr(tr_E UρU†)²``."""
    return 2.0


def moment_from_tail(t: TailProfile, m: float) -> MomentBound:
    """``E|X − μ|^m ≤ C Γ(m/2 + 1) a^{−m/2}`` (any real ``m > 0``)."""
    if m <= 0:
        raise PreconditionError(f"moment order must be positive, got {m}")
    if t.eta_shift:
        raise PreconditionError("moment_from_tail needs an unshifted profile")
    log_value = _log(t.C) + float(gammaln(m / 2 + 1)) - (m / 2) * math.log(t.a)
    log_loose = _log(t.C) + (m / 2) * math.log(m / (2 * t.a))
    return MomentBound(
        value=math.exp(log_value) if log_value < 709.0 else math.inf,
        log_value=log_value,
        loose_value=math.exp(log_loose) if log_loose < 709.0 else math.inf,
    )


def shifted_moment_from_tail(t: TailProfile, m: float) -> MomentBound:
    """``E X^m ≤ C (2m/a)^{m/2} + (2η)^m`` for ``X ≥ 0`` with a shifted tail."""
    if m <= 0:
        raise PreconditionError(f"moment order must be positive, got {m}")
    log_value = _log_sum(
        _log(t.C) + (m / 2) * math.log(2 * m / t.a),
        m * _log(2 * t.eta_shift),
    )
    return MomentBound(
        value=math.exp(log_value) if log_value < 709.0 else math.inf,
        log_value=log_value,
    )


def design_moment_gap(
    p: PolynomialSpec, mu: float, eps: float, d: int, k: int, m: int
) -> MomentBound:
    """Extra ``2m``-th moment a design may carry: ``ε d^{−k} (α + |μ|)^{2m}``."""
    if 2 * m * p.K > k:
        raise PreconditionError(f"2mK = {2 * m * p.K} exceeds k = {k}")
    if eps < 0:
        raise PreconditionError("ε must be non-negative")
    log_value = _log(eps) - k * math.log(d) + 2 * m * math.log(p.alpha + abs(mu))
    return MomentBound(value=math.exp(min(log_value, 709.0)), log_value=log_value)


def _log_poly_tail(t: TailProfile, p: PolynomialSpec, eps, d, k, delta, m) -> float:
    return -2 * m * math.log(delta) + _log_sum(
        _log(t.C) + m * math.log(m / t.a),
        _log(eps) - k * math.log(d) + 2 * m * math.log(p.alpha + abs(t.mu)),
    )


def poly_tail_design(
    t: TailProfile,
    p: PolynomialSpec,
    eps: float,
    d: int,
    k: int,
    delta: float,
    m: Optional[int] = None,
) -> BoundResult:
    """
    Tail bound for a degree-``K`` polynomial under an ε-approximate k-design.

    Without ``m``, the order is chosen by descending from ``⌊aδ²/e⌋``; the
    log of the bound is convex in ``m`` so the local minimum is global on
    ``1..⌊k/2K⌋``.
    """
    if delta <= 0:
        raise PreconditionError("δ must be positive")
    m_max = k // (2 * p.K)
    if m_max < 1:
        raise PreconditionError(f"k = {k} is too small for a degree-{p.K} polynomial")
    inputs = {"C": t.C, "a": t.a, "mu": t.mu, "K": p.K, "alpha": p.alpha}
    inputs.update({"eps": eps, "d": d, "k": k, "delta": delta, "m": m})

    def value(order: int) -> float:
        return _log_poly_tail(t, p, eps, d, k, delta, order)

    seed = min(max(1, math.floor(t.a * delta**2 / math.e)), m_max)
    if m is not None:
        if not 1 <= m <= m_max:
            raise PreconditionError(f"m must lie in 1..{m_max}, got {m}")
        best = m
    else:
        best = seed
        for step in (1, -1):
            while 1 <= best + step <= m_max and value(best + step) < value(best):
                best += step
    extras = {"m": best, "m_seed": seed, "m_max": m_max}
    if eps == 0:
        extras["log2_closed_form"] = (_log(t.C) - t.a * delta**2 / math.e) / LN2
    return _result("poly", inputs, value(best), extras=extras)


# ---------------------------------------------------------------------------
# Entanglement entropy
# ---------------------------------------------------------------------------


def markov_purity_tail(gamma: float) -> BoundResult:
    """``P(tr ψ_S² ≥ μγ) ≤ 1/γ``."""
    if gamma <= 0:
        raise PreconditionError("γ must be positive")
    return _result("markov-purity", {"gamma": gamma}, -math.log(gamma))


def markov_entropy_tail(alpha: float) -> BoundResult:
    """``P(S(ψ_S) ≤ log₂ d_S − α − β) ≤ 2^{−α}`` for an exact 2-design."""
    return _result("markov-entropy", {"alpha": alpha}, -alpha * LN2)


def alpha_purity(rho: DensityMatrix, d: int) -> float:
    """Coefficient mass ``d² (Σ|ρ_ij|)²`` of purity as a polynomial in ``U``."""
    alpha = d**2 * float(np.sum(np.abs(rho.matrix))) ** 2
    if alpha > d**4 + 1e-6:
        raise InvariantViolation(f"coefficient mass {alpha} exceeds d⁴")
    return alpha


def beta_offset(dims: BipartiteDims) -> float:
    """``β = d_S / (d_E ln 2)``."""
    return dims.d_S / (dims.d_E * LN2)


def entropy_tail_haar(dims: BipartiteDims, alpha: float) -> BoundResult:
    """``exp(−(d−1) C α² / (log₂ d_S)²)`` for Haar-random states."""
    if dims.d_S < 2:
        raise PreconditionError("entropy concentration needs d_S ≥ 2")
    warnings = []
    if not dims.d_E >= dims.d_S >= 3:
        warnings.append(f"requires d_E ≥ d_S ≥ 3, got d_S={dims.d_S}, d_E={dims.d_E}")
    log_raw = -(dims.d - 1) * c_entropy() * alpha**2 / math.log2(dims.d_S) ** 2
    return _result(
        "entropy-haar",
        {"ds": dims.d_S, "de": dims.d_E, "alpha": alpha},
        log_raw,
        warnings,
        {"beta": beta_offset(dims)},
    )


def entropy_tail_design_messy(
    mu: float, alpha: float, m: int, eps: float, d: int, k: int
) -> BoundResult:
    """Moment bound on low entanglement entropy under an ε-approximate k-design."""
    if 4 * m > k:
        raise PreconditionError(f"m = {m} exceeds k/4 = {k / 4}")
    if alpha <= 0 or mu <= 0:
        raise PreconditionError("α and μ must be positive")
    log_raw = -2 * m * (math.log(mu) + _log_pow2_minus_1(alpha)) + _log_sum(
        math.log(4.0) + m * math.log(4 * m / (c1() * d)),
        _log(eps) - k * math.log(d) + 2 * m * math.log(d**4 + mu),
    )
    inputs = {"mu": mu, "alpha": alpha, "m": m, "eps": eps, "d": d, "k": k}
    return _result("entropy-messy", inputs, log_raw)


def entropy_tail_design(n: int, d_S: int, alpha: float) -> BoundResult:
    """``8 · 2^{−(n / (80 log₂ n))(n/5 + α)}`` on ``n`` qubits."""
    if n < 19:
        raise PreconditionError(f"needs n ≥ 19, got {n}")
    if not 2 <= d_S <= 2 ** (n / 10):
        raise PreconditionError(f"needs 2 ≤ d_S ≤ 2^(n/10), got d_S={d_S}")
    if alpha < 2:
        raise PreconditionError(f"needs α ≥ 2, got {alpha}")
    log2_raw = 3.0 - (n / (80 * math.log2(n))) * (n / 5 + alpha)
    return _result(
        "entropy-design",
        {"n": n, "ds": d_S, "alpha": alpha},
        log2_raw * LN2,
        extras={"design_k": n / (10 * math.log2(n)), "design_log2_eps": -2.0 * n * n},
    )


def entropy_tail_design_chain(
    d_S: int, d: int, k: int, alpha: float, eps: Optional[float] = None
) -> BoundResult:
    """
    The simplification from the moment bound to the closed form, step by step.

    With ``δ = 2^α − 1`` and ``m = k/8`` the bound reads
    ``(d_S/δ)^{k/4} (4 (k / 2C₁d)^{k/8} + 2ε)``; at the matched
    ``ε* = 2 (k / 2C₁d)^{k/8}`` this is ``8 (d_S² k / (2C₁ d δ²))^{k/8}``,
    the reported bound.  With an explicit ``eps`` the unmatched form is
    reported in the extras.
    """
    if d % d_S:
        raise PreconditionError(f"d_S = {d_S} does not divide d = {d}")
    log_delta = _log_pow2_minus_1(alpha)
    log_ratio = math.log(k / (2 * c1() * d))
    log_raw = math.log(8.0) + (k / 8) * (
        2 * math.log(d_S) + log_ratio - 2 * log_delta
    )
    dims = BipartiteDims(d_S=d_S, d_E=d // d_S)
    mu = (dims.d_S + dims.d_E) / (dims.d + 1)
    extras: Dict[str, Any] = {
        "log2_eps_matched": (math.log(2.0) + (k / 8) * log_ratio) / LN2,
        "k_optimal": 2 * c1() * math.exp(2 * log_delta) * d / (math.e * d_S**2),
        "purity_check": -math.log2(mu) >= math.log2(d_S) - beta_offset(dims),
    }
    if eps is not None:
        unmatched = (k / 4) * (math.log(d_S) - log_delta) + _log_sum(
            math.log(4.0) + (k / 8) * log_ratio, math.log(2.0) + _log(eps)
        )
        extras["log2_with_eps"] = unmatched / LN2
    inputs = {"ds": d_S, "d": d, "k": k, "alpha": alpha}
    return _result("entropy-chain", inputs, log_raw, extras=extras)


# ---------------------------------------------------------------------------
# Canonical typicality
# ---------------------------------------------------------------------------


def statmech_tail_haar(d_S: int, d_R: int, d_eff: float, eps: float) -> BoundResult:
    """Haar tail of ``‖ρ_S − Ω_S‖₁`` past ``ε + √(d_S/d_eff)``."""
    if eps < 0:
        raise PreconditionError("ε must be non-negative")
    warnings = []
    if d_eff < d_R / d_S:
        warnings.append(f"d_eff = {d_eff} is below d_R/d_S = {d_R / d_S}")
    log_raw = math.log(2.0) - c2() * d_R * eps**2
    return _result(
        "statmech-haar",
        {"ds": d_S, "dr": d_R, "deff": d_eff, "eps": eps},
        log_raw,
        warnings,
        {"offset": math.sqrt(d_S / d_eff)},
    )


def statmech_tail_design(
    d_S: int,
    d_R: int,
    delta: float,
    k: int,
    eps: float = 0.0,
    mode: str = "simplified",
    m: Optional[int] = None,
) -> BoundResult:
    """Distance from the canonical state under an ε-approximate k-design."""
    if delta <= 0:
        raise PreconditionError("δ must be positive")
    inputs = {"ds": d_S, "dr": d_R, "delta": delta, "k": k, "eps": eps, "mode": mode}
    warnings = []
    if mode == "simplified":
        if k % 8:
            raise PreconditionError(f"simplified form needs k divisible by 8, got {k}")
        if k > 8 * c2() * d_S**2:
            warnings.append(f"requires k ≤ 8C₂d_S² = {8 * c2() * d_S**2:.4g}")
        eps_max = 1.5 * (4 * d_S**3 / d_R) ** (k / 8)
        if eps > eps_max:
            warnings.append(f"requires ε ≤ {eps_max:.4g}")
        log_raw = math.log(6.0) + (k / 8) * math.log(4 * d_S**3 / (d_R * delta**2))
        return _result("statmech-design", inputs, log_raw, warnings)
    if mode != "messy":
        raise ValueError(f"mode must be 'simplified' or 'messy', got {mode!r}")
    if m is None:
        if k % 8:
            raise PreconditionError("messy form needs an integer m when 8 ∤ k")
        m = k // 8
    inputs["m"] = m
    log_raw = (k / 8) * math.log(d_S / delta**2) + _log_sum(
        math.log(2.0) + (k / 8) * math.log(k / (2 * c2() * d_R)),
        (k / 8) * math.log(4 * d_S**2 / d_R),
        _log(eps) - k * math.log(d_R) + 4 * m * math.log(d_R**2 + 1),
    )
    return _result("statmech-design", inputs, log_raw, warnings)


# ---------------------------------------------------------------------------
# Geometric measure of entanglement
# ---------------------------------------------------------------------------


def overlap_tail(
    d: int, delta: float, m: int, eps: float = 0.0, k: Optional[int] = None
) -> BoundResult:
    """``P(|⟨Φ|Ψ⟩|² ≥ δ) ≤ (1+ε) m! / (dδ)^m`` for a state design."""
    if m < 1 or (k is not None and m > k):
        raise PreconditionError(f"m must lie in 1..k, got m={m}, k={k}")
    if delta <= 0:
        raise PreconditionError("δ must be positive")
    log_raw = math.log1p(eps) + float(gammaln(m + 1)) - m * math.log(d * delta)
    log_binomial = (
        math.log1p(eps)
        - (float(gammaln(m + d)) - float(gammaln(m + 1)) - float(gammaln(d)))
        - m * math.log(delta)
    )
    return _result(
        "overlap",
        {"d": d, "delta": delta, "m": m, "eps": eps},
        log_raw,
        extras={"binomial_bound": math.exp(min(log_binomial, 0.0))},
    )


def net_size(gamma: float, n: int) -> float:
    """``log₂`` of the product-state net size bound ``(5n/γ)^{4n}``."""
    if gamma <= 0:
        raise PreconditionError("γ must be positive")
    return 4 * n * math.log2(5 * n / gamma)


def geom_ent_tail(n: int, k: int, delta: float, eps: float) -> BoundResult:
    """``(1+ε) 2^{k log₂ 2k + 4n log₂ 10n − kδ + 4n(n−δ)}``."""
    if k < 1:
        raise PreconditionError("k must be at least 1")
    log2_raw = (
        math.log2(1 + eps)
        + k * math.log2(2 * k)
        + 4 * n * math.log2(10 * n)
        - k * delta
        + 4 * n * (n - delta)
    )
    return _result(
        "geoment",
        {"n": n, "k": k, "delta": delta, "eps": eps},
        log2_raw * LN2,
        extras={"log2_corollary": geom_ent_corollary(n).log2_bound},
    )


def geom_ent_corollary(n: int) -> BoundResult:
    """``2 n^{−n²}``, the value quoted for ``k = n², δ = 3 log₂ n + 5, ε = 1``."""
    return _result("geoment-corollary", {"n": n}, LN2 - n * n * math.log(n))


def pmin_floor(ensemble: UnitaryEnsemble) -> float:
    """No nonvacuous tail bound on an explicit ensemble can drop below ``p_min``."""
    return pmin(ensemble)
