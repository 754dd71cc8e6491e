"""Quantitative soundness tools: nearest (quasi)rigid states, the feasible
(Density, QuasiCheck) region, the four-case soundness classifier, a witness
optimiser on the unit sphere and an exhaustive search over rigid witnesses.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .csp import CSPSystem
from .detectors import DetectorKind, DetectorSpec, excluded_sums, pairwise_cross
from .errors import HypothesisNotMet, ObjectiveError, TooLarge
from .verifier import (
    AcceptanceProfile,
    BipartiteWitness,
    ProtocolParams,
    build_rigid_witness,
    constraintcheck_accept_prob,
    protocol_accept_prob,
    witness_to_json,
)

FEASIBILITY_TOL = 1e-10
MAX_OPT_DIM = 64
MAX_RIGID_ENUM = 10**6


# -- nearest quasirigid / rigid states ----------------------------------------


@dataclass(frozen=True)
class QuasirigidProjection:
    phi: BipartiteWitness
    f: tuple[int, ...]
    gamma: float


def nearest_quasirigid(psi: BipartiteWitness) -> QuasirigidProjection:
    """Keep the heaviest entry of every row and renormalise.

    Ties go to the smallest value index. The squared overlap of the result
    with ``psi`` is exactly gamma, the retained weight.
    """
    mags = np.abs(psi.amps) ** 2
    f = np.argmax(mags, axis=1)
    rows = np.arange(psi.R)
    kept = psi.amps[rows, f]
    gamma = float(np.sum(np.abs(kept) ** 2))
    amps = np.zeros_like(psi.amps)
    amps[rows, f] = kept / math.sqrt(gamma)
    return QuasirigidProjection(BipartiteWitness(amps), tuple(int(x) for x in f), gamma)


def nearest_rigid(psi: BipartiteWitness) -> BipartiteWitness:
    """The rigid state on the basis elements selected by nearest_quasirigid."""
    return build_rigid_witness(nearest_quasirigid(psi).f, psi.R, psi.kappa)


def witness_overlap(a: BipartiteWitness, b: BipartiteWitness) -> float:
    return float(abs(np.vdot(a.amps, b.amps)) ** 2)


def witness_infidelity(a: BipartiteWitness, b: BipartiteWitness) -> float:
    """1 - |<a|b>|^2 as the squared norm of b's component orthogonal to a.

    Avoids the cancellation in 1 - overlap when the states nearly coincide.
    """
    resid = b.amps - np.vdot(a.amps, b.amps) * a.amps
    return float(np.sum(np.abs(resid) ** 2) / np.sum(np.abs(b.amps) ** 2))


def quasirigid_overlap_bound(w_q: float, epsilon: float, delta: float) -> float:
    """(1 - eps)(w - (1 - delta)) / delta: guaranteed overlap with some quasirigid state."""
    return (1.0 - epsilon) * (w_q - (1.0 - delta)) / delta


def rigid_overlap_bound(kappa: int, w_d: float, epsilon: float, d_q: float) -> float:
    """kappa * w_D - (kappa + 1) sqrt(eps + d_Q): guaranteed overlap with a rigid state."""
    return kappa * w_d - (kappa + 1) * math.sqrt(epsilon + d_q)


# -- feasible region ------------------------------------------------------------


def quadratic_lhs(w_d: float, w_q: float, epsilon: float, delta: float, kappa: int) -> float:
    return (w_d - 1.0 / kappa) ** 2 + (1.0 - epsilon) * (w_q - (1.0 - delta)) / delta


def quadratic_feasible(
    w_d: float, w_q: float, epsilon: float, delta: float, kappa: int, tol: float = FEASIBILITY_TOL
) -> bool:
    """(w_D - 1/kappa)^2 + (1 - eps)(w_Q - (1 - delta))/delta <= 1, for w_D >= 1/kappa."""
    if w_d < 1.0 / kappa:
        raise HypothesisNotMet(f"w_D = {w_d!r} is below 1/kappa = {1.0 / kappa!r}")
    return quadratic_lhs(w_d, w_q, epsilon, delta, kappa) <= 1.0 + tol


def w_q_max(w_d: float, epsilon: float, delta: float, kappa: int) -> float:
    value = (1.0 - delta) + delta * (1.0 - (w_d - 1.0 / kappa) ** 2) / (1.0 - epsilon)
    return min(1.0, max(0.0, value))


def region_boundary(kappa: int, epsilon: float, delta: float, grid_points: int) -> list[tuple[float, float]]:
    """Upper edge of the allowed (w_D, w_Q) region on a uniform w_D grid over [1/kappa, 1]."""
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    grid = np.linspace(1.0 / kappa, 1.0, grid_points)
    return [(float(w), w_q_max(float(w), epsilon, delta, kappa)) for w in grid]


# -- random witnesses -----------------------------------------------------------

WITNESS_FAMILIES = ("haar", "nonneg", "sparse", "near_rigid", "near_quasirigid", "near_uniform")


def random_witness(
    R: int, kappa: int, rng: np.random.Generator, family: str = "haar", noise: float | None = None
) -> BipartiteWitness:
    """Draw a witness from one of several families that cover the (w_D, w_Q) plane.

    ``noise`` sets the perturbation size for the near_* families (drawn
    log-uniformly from [1e-6, 0.5] when omitted).
    """
    shape = (R, kappa)
    if noise is None:
        noise = float(10 ** rng.uniform(-6, math.log10(0.5)))

    def gauss():
        return rng.normal(size=shape) + 1j * rng.normal(size=shape)

    if family == "haar":
        raw = gauss()
    elif family == "nonneg":
        raw = np.abs(rng.normal(size=shape)) ** rng.uniform(0.2, 3.0)
    elif family == "sparse":
        raw = gauss() * (rng.random(shape) < rng.uniform(0.1, 0.6))
        if not raw.any():
            raw[rng.integers(R), rng.integers(kappa)] = 1.0
    elif family in ("near_rigid", "near_quasirigid"):
        raw = np.zeros(shape, dtype=np.complex128)
        coeff = np.ones(R) if family == "near_rigid" else rng.normal(size=R) + 1j * rng.normal(size=R)
        if family == "near_quasirigid" and rng.random() < 0.5:
            coeff = np.abs(coeff)
        raw[np.arange(R), rng.integers(0, kappa, size=R)] = coeff / np.linalg.norm(coeff)
        raw = raw + noise * gauss() / math.sqrt(2 * R * kappa)
    elif family == "near_uniform":
        raw = np.ones(shape) / math.sqrt(R * kappa) + noise * gauss() / math.sqrt(2 * R * kappa)
    else:
        raise ValueError(f"unknown witness family {family!r}")
    return BipartiteWitness.from_unnormalized(raw)


def random_nonneg_witness(R: int, kappa: int, rng: np.random.Generator) -> BipartiteWitness:
    """A witness with non-negative real amplitudes, mixing several shapes."""
    family = WITNESS_FAMILIES[rng.integers(len(WITNESS_FAMILIES))]
    return BipartiteWitness.from_unnormalized(np.abs(random_witness(R, kappa, rng, family).amps))


# -- four-case soundness classifier --------------------------------------------


@dataclass(frozen=True)
class CaseReport:
    """Soundness case of one witness and whether the matching bound holds.

    ``excess`` is Z * (P_NO - P_YES), the acceptance advantage over the
    completeness value measured in units of 1/Z; the case bound reads
    excess <= -nu/2 (nu_low for cases 1-3, nu_high for case 4). Working in
    these units keeps the check meaningful when the gap is ~1e-19.
    ``holds`` is None for case 4 on instances not known to be No instances.
    """

    case: int
    p_no: float
    bound: float
    excess: float
    excess_bound: float
    holds: bool | None
    checks: dict[str, bool] = field(default_factory=dict)

    def to_row(self, profile: AcceptanceProfile) -> dict:
        return {
            "case": self.case,
            "w_d": profile.w_d,
            "w_q": profile.w_q,
            "w_c": profile.w_c,
            "p_no": self.p_no,
            "bound": self.bound,
            "holds": self.holds,
        }


def scaled_excess(profile: AcceptanceProfile, params: ProtocolParams) -> float:
    """Z * (P - P_YES) assembled term by term (no subtraction of near-equal totals)."""
    z = params.z
    return profile.d - (z * params.p2) * profile.q_reject + (z * params.p3) * (profile.w_c - params.c_yes)


def classify_case(profile: AcceptanceProfile, params: ProtocolParams) -> int:
    if profile.d <= -params.nu_low:
        return 1
    if profile.d >= params.nu_high:
        return 2
    if profile.d_q >= params.nu_low:
        return 3
    return 4


def classify_soundness_case(
    profile: AcceptanceProfile,
    params: ProtocolParams,
    *,
    no_instance: bool = True,
    witness: BipartiteWitness | None = None,
    system: CSPSystem | None = None,
    tol: float = FEASIBILITY_TOL,
) -> CaseReport:
    """Assign the witness to a soundness case and check that case's bound.

    Besides the final bound, ``checks`` holds the intermediate inequalities
    of the case (each with O(1) slack). For case 4 these need ``witness``
    and ``system``: the nearest rigid state chi is formed and its overlap
    and ConstraintCheck value are compared against the rigidity radius.
    """
    case = classify_case(profile, params)
    k, e, lo, hi = params.kappa, params.epsilon, params.nu_low, params.nu_high
    excess = scaled_excess(profile, params)
    p_no = params.p1 * profile.w_d + params.p2 * profile.w_q + params.p3 * profile.w_c
    nu = hi if case == 4 else lo
    checks: dict[str, bool] = {}
    if case == 1:
        checks["density_deficit"] = profile.d <= -lo
    elif case == 2:
        # QuasiCheck rejection forced by the quadratic region: d_Q >= (d^2 - eps)/(1 - eps)
        checks["quadratic_region"] = profile.d_q >= (profile.d**2 - e) / (1.0 - e) - tol
    elif case == 3:
        checks["p2_delta_ge_2p1"] = params.p2 * params.delta >= 2.0 * params.p1 * (1.0 - tol)
        checks["d_le_nu_low"] = profile.d <= lo
    elif witness is not None and system is not None:
        chi = nearest_rigid(witness)
        overlap = witness_overlap(chi, witness)
        radius = math.sqrt(k * lo + (k + 1) * math.sqrt(e + lo))
        checks["rigid_overlap"] = overlap >= 1.0 + k * profile.d - (k + 1) * math.sqrt(e + lo) - tol
        w_c_chi = constraintcheck_accept_prob(chi, system, params.c_yes)
        checks["constraint_shift"] = abs(profile.w_c - w_c_chi) <= math.sqrt(witness_infidelity(chi, witness)) + tol
        checks["radius_le_xi_half"] = radius <= params.xi / 2.0 + tol
        if no_instance:
            checks["rigid_soundness"] = w_c_chi <= params.c_yes - params.xi + tol
    holds: bool | None = excess <= -nu / 2.0 + tol and all(checks.values())
    if case == 4 and not no_instance:
        holds = None
    return CaseReport(
        case=case,
        p_no=p_no,
        bound=params.p_yes - nu / (2.0 * params.z),
        excess=excess,
        excess_bound=-nu / 2.0,
        holds=holds,
        checks=checks,
    )


# -- fast protocol objective ----------------------------------------------------


@dataclass(frozen=True)
class FastProfile:
    """Array-level AcceptanceProfile plus the ConstraintCheck miss weight."""

    w_d: float
    w_q: float
    w_c: float
    d: float
    q_reject: float
    unsat: float


def fast_profile(amps: np.ndarray, mask: np.ndarray, c_yes: float, nonneg: bool) -> FastProfile:
    """Vectorised acceptance data for an R x kappa amplitude matrix of unit norm.

    Reject probabilities come from exclusion sums and pairwise cross terms,
    so they keep full relative accuracy when they are ~1e-20.
    """
    kappa = amps.shape[1]
    mags = np.abs(amps) ** 2
    weights = mags.sum(axis=1)
    live = weights > 0
    w_d = min(1.0, float(abs(amps.sum()) ** 2 / amps.size))
    if nonneg:
        reject = np.clip(pairwise_cross(amps) / kappa, 0.0, None)
    else:
        reject = np.zeros_like(weights)
        m = mags[live]
        reject[live] = np.sum(m * excluded_sums(m), axis=1) / weights[live]
    q_reject = float(reject.sum())
    unsat = float(np.sum(mags * ~mask))
    sat = float(np.sum(mags * mask))
    return FastProfile(
        w_d=w_d,
        w_q=float(weights[live].sum()) - q_reject,
        w_c=c_yes * sat,
        d=w_d - 1.0 / kappa,
        q_reject=q_reject,
        unsat=unsat,
    )


def protocol_objective(
    system: CSPSystem, params: ProtocolParams, det: DetectorSpec
) -> Callable[[BipartiteWitness], float]:
    """Vectorised protocol_accept_prob for use inside the optimiser."""
    mask = system.allowed_mask()
    nonneg = det.kind is DetectorKind.NON_NEGATIVE_FOURIER

    def objective(psi: BipartiteWitness) -> float:
        prof = fast_profile(psi.amps, mask, params.c_yes, nonneg)
        return params.p1 * prof.w_d + params.p2 * prof.w_q + params.p3 * prof.w_c

    return objective


def excess_objective(
    system: CSPSystem, params: ProtocolParams, det: DetectorSpec
) -> Callable[[BipartiteWitness], float]:
    """Z * (P - P_YES) with every term kept small; the soundness-relevant objective."""
    mask = system.allowed_mask()
    nonneg = det.kind is DetectorKind.NON_NEGATIVE_FOURIER
    w2, w3 = params.z * params.p2, params.z * params.p3

    def objective(psi: BipartiteWitness) -> float:
        prof = fast_profile(psi.amps, mask, params.c_yes, nonneg)
        return prof.d - w2 * prof.q_reject - w3 * params.c_yes * prof.unsat

    return objective


# -- optimiser ----------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerResult:
    best_state: BipartiteWitness
    best_value: float
    restarts_used: int
    trace: tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "best_value": self.best_value,
            "restarts_used": self.restarts_used,
            "trace": list(self.trace),
            "best_state": witness_to_json(self.best_state),
        }


def _to_witness(x: np.ndarray, R: int, kappa: int) -> BipartiteWitness:
    n = R * kappa
    z = (x[:n] + 1j * x[n:]) / np.linalg.norm(x)
    return BipartiteWitness(z.reshape(R, kappa))


def sphere_gradient(
    objective: Callable[[BipartiteWitness], float], x: np.ndarray, R: int, kappa: int, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of objective(x / |x|), projected onto the tangent space at x."""
    grad = np.empty_like(x)
    probe = x.copy()
    for i in range(x.size):
        probe[i] = x[i] + h
        up = objective(_to_witness(probe, R, kappa))
        probe[i] = x[i] - h
        down = objective(_to_witness(probe, R, kappa))
        probe[i] = x[i]
        grad[i] = (up - down) / (2.0 * h)
    unit = x / np.linalg.norm(x)
    return grad - np.dot(grad, unit) * unit


def _checked(value: float) -> float:
    if not math.isfinite(value):
        raise ObjectiveError(f"objective returned a non-finite value: {value!r}")
    return float(value)


def _ascend(objective, x, R, kappa, max_iter, tol, h):
    value = _checked(objective(_to_witness(x, R, kappa)))
    step = 0.1
    for _ in range(max_iter):
        grad = sphere_gradient(objective, x, R, kappa, h)
        gnorm = np.linalg.norm(grad)
        if gnorm == 0.0:
            break
        while step > 1e-14:
            trial = x + step * grad / gnorm
            trial /= np.linalg.norm(trial)
            trial_value = _checked(objective(_to_witness(trial, R, kappa)))
            if trial_value > value:
                break
            step *= 0.5
        else:
            break
        gain = trial_value - value
        x, value = trial, trial_value
        step = min(1.0, step * 1.5)
        if gain < tol:
            break
    return x, value


def optimize_witness(
    objective: Callable[[BipartiteWitness], float],
    R: int,
    kappa: int,
    restarts: int,
    seed: int,
    *,
    max_iter: int = 10_000,
    tol: float = 1e-10,
    h: float = 1e-5,
    init: Callable[[np.random.Generator], BipartiteWitness] | None = None,
) -> OptimizerResult:
    """Multi-restart projected gradient ascent over unit witnesses.

    Witnesses are parametrised by their real and imaginary parts in
    R^(2 R kappa) and renormalised after every step; the step size halves
    whenever a trial step fails to improve. Restart r draws its starting
    point from ``default_rng([seed, r])``, so results do not depend on the
    order restarts are run in.
    """
    n = R * kappa
    if n > MAX_OPT_DIM:
        raise TooLarge(f"R * kappa = {n} exceeds the optimiser cap {MAX_OPT_DIM}")
    if restarts < 1:
        raise ValueError("need at least one restart")
    best_x, best_value, trace = None, -math.inf, []
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        if init is None:
            x = rng.normal(size=2 * n)
        else:
            start = init(rng).amps.reshape(-1)
            x = np.concatenate([start.real, start.imag])
        x /= np.linalg.norm(x)
        x, value = _ascend(objective, x, R, kappa, max_iter, tol, h)
        trace.append(value)
        if value > best_value:
            best_x, best_value = x, value
    best_state = _to_witness(best_x, R, kappa)
    return OptimizerResult(best_state, _checked(objective(best_state)), restarts, tuple(trace))


# -- exhaustive rigid search ----------------------------------------------------------


@dataclass(frozen=True)
class RigidSearchResult:
    max_value: float
    best_sigma: tuple[int, ...]
    enumerated: int


def exhaustive_rigid_search(
    system: CSPSystem, params: ProtocolParams, det: DetectorSpec
) -> RigidSearchResult:
    """Maximum protocol acceptance over all kappa^R rigid witnesses."""
    R, kappa = system.R, system.kappa
    if kappa**R > MAX_RIGID_ENUM:
        raise TooLarge(f"kappa^R = {kappa**R} exceeds {MAX_RIGID_ENUM}")
    best_value, best_sigma, count = -math.inf, (), 0
    for sigma in itertools.product(range(kappa), repeat=R):
        value = protocol_accept_prob(build_rigid_witness(sigma, R, kappa), system, params, det)
        count += 1
        if value > best_value:
            best_value, best_sigma = value, sigma
    return RigidSearchResult(best_value, tuple(best_sigma), count)


# -- per-case adversaries -------------------------------------------------------------

_CASE_STARTS = {1: ("haar", None), 2: ("near_uniform", 0.3), 3: ("near_rigid", 3e-2), 4: ("near_rigid", 1e-4)}


def case_violation(d: float, d_q: float, params: ProtocolParams, case: int) -> float:
    """How far (d, d_Q) is from the region classify_case maps to ``case`` (0 inside)."""
    lo, hi = params.nu_low, params.nu_high
    if case == 1:
        return max(0.0, d + lo)
    if case == 2:
        return max(0.0, hi - d)
    band = max(0.0, -lo - d) + max(0.0, d - hi)
    if case == 3:
        return band + max(0.0, lo - d_q)
    return band + max(0.0, d_q - lo)


def case_adversaries(
    system: CSPSystem,
    params: ProtocolParams,
    det: DetectorSpec,
    case: int,
    count: int,
    seed: int,
    *,
    max_iter: int = 300,
) -> list[BipartiteWitness]:
    """Witnesses that maximise Z * (P - P_YES) while staying inside one soundness case.

    Each restart maximises the scaled excess minus a steep penalty for
    leaving the case region, starting from a witness family typical of that
    case.
    """
    mask = system.allowed_mask()
    nonneg = det.kind is DetectorKind.NON_NEGATIVE_FOURIER
    excess = excess_objective(system, params, det)
    # steeper than any term of the excess, including the Z * p2 * q_reject one
    weight = 10.0 * (1.0 + params.z * params.p2) / params.nu_low
    family, noise = _CASE_STARTS[case]

    def objective(psi: BipartiteWitness) -> float:
        amps = np.abs(psi.amps) if nonneg else psi.amps
        psi = BipartiteWitness(amps) if nonneg else psi
        prof = fast_profile(amps, mask, params.c_yes, nonneg)
        penalty = case_violation(prof.d, prof.q_reject / det.delta, params, case)
        return excess(psi) - weight * penalty

    out = []
    for r in range(count):
        res = optimize_witness(
            objective,
            system.R,
            system.kappa,
            1,
            seed + r,
            max_iter=max_iter,
            init=lambda rng: random_witness(system.R, system.kappa, rng, family, noise),
        )
        best = res.best_state
        out.append(BipartiteWitness(np.abs(best.amps)) if nonneg else best)
    return out
