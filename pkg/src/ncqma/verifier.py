"""The three verifier tests and the mixed protocol built from them.

Witnesses live on an index register of dimension R (one basis state per
constraint) and a value register of dimension kappa = |Sigma|^q. The
protocol runs Density with probability p1, QuasiCheck with probability p2
and the (dampened) ConstraintCheck with probability p3.

Every test has an analytic acceptance probability and a sampled twin; the
sampled functions accept ``shots`` to draw many independent runs at once.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .csp import CSPSystem, GapInstance, best_assignment, restriction
from .detectors import (
    DetectorKind,
    DetectorSpec,
    delta_noncollapsing,
    delta_nonneg,
    detector_accept_prob,
    detector_reject_prob,
    detector_sample,
)
from .errors import (
    BadAssignment,
    DegenerateConstants,
    DimMismatch,
    Infeasible,
    InvalidThreshold,
    ParseError,
)
from .state import (
    NORM_TOL,
    StateVector,
    fourier_sample,
    sample_index,
    state_from_json,
    state_to_json,
)

# diagnostic preset: measurable end-to-end gap, deliberately ignores nu_high/nu_low <= xi/(6(1-C_YES))
DIAGNOSTIC_EPSILON = 0.0025
DIAGNOSTIC_NU = 0.1
DEFAULT_C_YES = 0.75
DEFAULT_XI = 0.5


@dataclass(frozen=True, eq=False)
class BipartiteWitness:
    """Amplitudes a[j, x] over the index register (rows) and value register (columns)."""

    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=np.complex128)
        if amps.ndim != 2 or min(amps.shape) < 1:
            raise DimMismatch(f"witness amplitudes must be an R x kappa matrix, got {amps.shape}")
        norm2 = float(np.sum(np.abs(amps) ** 2))
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValueError(f"witness is not normalized: sum |a|^2 = {norm2!r}")
        amps.flags.writeable = False
        object.__setattr__(self, "amps", amps)

    @property
    def R(self) -> int:
        return int(self.amps.shape[0])

    @property
    def kappa(self) -> int:
        return int(self.amps.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.R, self.kappa

    @property
    def state(self) -> StateVector:
        return StateVector(self.amps.reshape(-1))

    def row_weights(self) -> np.ndarray:
        return np.sum(np.abs(self.amps) ** 2, axis=1)

    @classmethod
    def from_state(cls, psi: StateVector, R: int, kappa: int) -> "BipartiteWitness":
        if psi.dim != R * kappa:
            raise DimMismatch(f"state of dim {psi.dim} cannot be split as {R} x {kappa}")
        return cls(psi.amps.reshape(R, kappa))

    @classmethod
    def from_unnormalized(cls, raw) -> "BipartiteWitness":
        raw = np.asarray(raw, dtype=np.complex128)
        return cls(raw / np.linalg.norm(raw))


@dataclass(frozen=True, eq=False)
class RigidDescriptor:
    """psi = sum_j b_j |j>|sigma(j)>; rigid when every b_j = 1/sqrt(R)."""

    sigma: tuple[int, ...]
    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=np.complex128).reshape(-1)
        if len(self.sigma) != b.size:
            raise DimMismatch("sigma and b must have one entry per constraint")
        if abs(float(np.sum(np.abs(b) ** 2)) - 1.0) > NORM_TOL:
            raise ValueError("coefficients b must have unit norm")
        object.__setattr__(self, "sigma", tuple(int(s) for s in self.sigma))
        object.__setattr__(self, "b", b)

    @property
    def is_rigid(self) -> bool:
        return bool(np.all(np.abs(self.b - 1.0 / math.sqrt(self.b.size)) <= NORM_TOL))

    def to_witness(self, kappa: int) -> BipartiteWitness:
        R = len(self.sigma)
        if any(not 0 <= s < kappa for s in self.sigma):
            raise BadAssignment(f"sigma maps outside [0, {kappa})")
        amps = np.zeros((R, kappa), dtype=np.complex128)
        amps[np.arange(R), list(self.sigma)] = self.b
        return BipartiteWitness(amps)


def build_rigid_witness(sigma: Sequence[int], R: int, kappa: int) -> BipartiteWitness:
    """(1/sqrt R) sum_j |j>|sigma(j)>, with sigma(j) given as a value-register index."""
    if len(sigma) != R:
        raise BadAssignment(f"sigma must be total on [0, {R}), got {len(sigma)} entries")
    for j, s in enumerate(sigma):
        if not 0 <= int(s) < kappa:
            raise BadAssignment(f"sigma({j}) = {s} outside [0, {kappa})")
    return RigidDescriptor(tuple(sigma), np.full(R, 1.0 / math.sqrt(R))).to_witness(kappa)


def assignment_sigma(c: CSPSystem, assignment: Sequence[int]) -> tuple[int, ...]:
    """Per-constraint value indices induced by a variable assignment."""
    return tuple(c.encode(restriction(c, assignment, j)) for j in range(c.R))


def planted_rigid_witness(inst: GapInstance, assignment: Sequence[int] | None = None) -> BipartiteWitness:
    c = inst.system
    if assignment is None:
        assignment = inst.planted if inst.planted is not None else best_assignment(c)
    return build_rigid_witness(assignment_sigma(c, assignment), c.R, c.kappa)


# -- Density ------------------------------------------------------------------


def density_accept_prob(psi: BipartiteWitness) -> float:
    """|<+|psi>|^2 with |+> uniform over all R * kappa basis states."""
    return min(1.0, float(abs(psi.amps.sum()) ** 2 / psi.amps.size))


def density_sample(psi: BipartiteWitness, rng: np.random.Generator, shots: int | None = None):
    outcome = fourier_sample(psi.state, rng, shots)
    if shots is None:
        return int(outcome == 0)
    return (outcome == 0).astype(np.int8)


# -- QuasiCheck ---------------------------------------------------------------


@dataclass(frozen=True)
class QuasiCheckBreakdown:
    """Per-row data behind a QuasiCheck acceptance probability.

    ``c_flags[j]`` is 1 - delta when row j is eps-far from every value basis
    state (max_x |a_jx|^2 <= (1 - eps) * weight_j) and 1 otherwise;
    ``upper_bound`` is sum_j weight_j * c_flags[j].
    """

    weights: np.ndarray
    row_accept: np.ndarray
    c_flags: np.ndarray
    accept_prob: float
    reject_prob: float
    upper_bound: float


def _check_detector(psi: BipartiteWitness, det: DetectorSpec) -> None:
    if det.dim != psi.kappa:
        raise DimMismatch(f"detector acts on dim {det.dim}, value register has dim {psi.kappa}")


def _row_states(psi: BipartiteWitness):
    weights = psi.row_weights()
    for j, w in enumerate(weights):
        if w > 0.0:
            yield j, w, StateVector(psi.amps[j] / math.sqrt(w))


def quasicheck_breakdown(psi: BipartiteWitness, det: DetectorSpec) -> QuasiCheckBreakdown:
    _check_detector(psi, det)
    weights = psi.row_weights()
    row_accept = np.zeros(psi.R)
    row_reject = np.zeros(psi.R)
    for j, _, row in _row_states(psi):
        row_accept[j] = detector_accept_prob(det, row)
        row_reject[j] = detector_reject_prob(det, row)
    peak = np.max(np.abs(psi.amps) ** 2, axis=1)
    far = peak <= (1.0 - det.epsilon) * weights
    c_flags = np.where(far, 1.0 - det.delta, 1.0)
    return QuasiCheckBreakdown(
        weights=weights,
        row_accept=row_accept,
        c_flags=c_flags,
        accept_prob=min(1.0, float(np.dot(weights, row_accept))),
        reject_prob=float(np.dot(weights, row_reject)),
        upper_bound=float(np.dot(weights, c_flags)),
    )


def quasicheck_accept_prob(psi: BipartiteWitness, det: DetectorSpec) -> float:
    """sum_j weight_j * A(detector, normalised row j); empty rows contribute 0."""
    return quasicheck_breakdown(psi, det).accept_prob


def quasicheck_reject_prob(psi: BipartiteWitness, det: DetectorSpec) -> float:
    """1 - quasicheck_accept_prob, accurate even when the deficit is ~1e-20."""
    return quasicheck_breakdown(psi, det).reject_prob


def quasicheck_sample(
    psi: BipartiteWitness, det: DetectorSpec, rng: np.random.Generator, shots: int | None = None
):
    """Collapse the index register, then run the detector on the residual."""
    _check_detector(psi, det)
    weights = psi.row_weights()
    if shots is None:
        j = sample_index(weights, rng)
        row = StateVector(psi.amps[j] / math.sqrt(weights[j]))
        return int(detector_sample(det, row, rng))
    rows = sample_index(weights, rng, shots)
    out = np.zeros(shots, dtype=np.int8)
    for j in np.unique(rows):
        where = rows == j
        row = StateVector(psi.amps[j] / math.sqrt(weights[j]))
        out[where] = detector_sample(det, row, rng, int(where.sum()))
    return out


# -- ConstraintCheck ------------------------------------------------------------


def _check_csp(psi: BipartiteWitness, c: CSPSystem) -> None:
    if psi.R != c.R or psi.kappa != c.kappa:
        raise DimMismatch(f"witness is {psi.R} x {psi.kappa}, system needs {c.R} x {c.kappa}")


def constraintcheck_accept_prob(psi: BipartiteWitness, c: CSPSystem, c_yes: float) -> float:
    """C_YES * Pr[measured (j, x) satisfies constraint j]."""
    _check_csp(psi, c)
    sat = float(np.sum(np.abs(psi.amps) ** 2 * c.allowed_mask()))
    return c_yes * sat


def constraintcheck_sample(
    psi: BipartiteWitness,
    c: CSPSystem,
    c_yes: float,
    rng: np.random.Generator,
    shots: int | None = None,
):
    """Measure both registers, check the constraint, then keep the verdict with prob C_YES."""
    _check_csp(psi, c)
    flat = sample_index(np.abs(psi.amps.reshape(-1)) ** 2, rng, shots)
    ok = c.allowed_mask().reshape(-1)[flat]
    coin = rng.random(shots) < c_yes
    if shots is None:
        return int(ok and coin)
    return (ok & coin).astype(np.int8)


# -- constants and mixture -----------------------------------------------------


class Mixture(NamedTuple):
    p1: float
    p2: float
    p3: float
    z: float
    p_yes: float
    gap: float


def mixture(
    epsilon: float, nu_low: float, nu_high: float, delta: float, c_yes: float, kappa: int
) -> Mixture:
    """Test probabilities p1, p2, p3, their normaliser Z, completeness and gap."""
    if nu_high**2 <= epsilon:
        raise DegenerateConstants(f"need nu_high^2 > eps, got {nu_high**2!r} <= {epsilon!r}")
    if delta <= 0.0:
        raise DegenerateConstants("delta must be positive")
    if not c_yes < 1.0:
        raise DegenerateConstants("C_YES must be below 1")
    w2 = (nu_low + nu_high) * (1.0 - epsilon) / (delta * (nu_high**2 - epsilon))
    w3 = nu_low / (2.0 * (1.0 - c_yes))
    z = 1.0 + w2 + w3
    p1, p2, p3 = 1.0 / z, w2 / z, w3 / z
    p_yes = p1 / kappa + p2 + p3 * c_yes
    return Mixture(p1, p2, p3, z, p_yes, nu_high / (2.0 * z))


@dataclass(frozen=True)
class ProtocolParams:
    kappa: int
    epsilon: float
    nu_low: float
    nu_high: float
    c_yes: float
    xi: float
    delta: float
    p1: float
    p2: float
    p3: float
    z: float
    p_yes: float
    gap: float
    preset: str = "custom"

    def __post_init__(self):
        ps = (self.p1, self.p2, self.p3)
        # p2 = 1 - (p1 + p3) may round to exactly 1.0 once Z exceeds ~1e16
        in_range = 0.0 < self.p1 < 1.0 and 0.0 < self.p3 < 1.0 and 0.0 < self.p2 <= 1.0
        if not in_range or abs(sum(ps) - 1.0) > NORM_TOL:
            raise DegenerateConstants(f"mixture probabilities invalid: {ps}")
        if not 0.0 < self.xi <= self.c_yes < 1.0:
            raise InvalidThreshold(f"need 0 < xi <= C_YES < 1, got xi={self.xi}, C_YES={self.c_yes}")

    @classmethod
    def build(
        cls,
        kappa: int,
        epsilon: float,
        nu_low: float,
        nu_high: float,
        delta: float,
        c_yes: float = DEFAULT_C_YES,
        xi: float = DEFAULT_XI,
        preset: str = "custom",
    ) -> "ProtocolParams":
        m = mixture(epsilon, nu_low, nu_high, delta, c_yes, kappa)
        return cls(kappa, epsilon, nu_low, nu_high, c_yes, xi, delta, *m, preset=preset)

    def constraint_checks(self) -> dict[str, bool]:
        """The three constant conditions the soundness argument needs, by name."""
        k, e, lo, hi = self.kappa, self.epsilon, self.nu_low, self.nu_high
        return {
            "eps_lt_nu_high_sq": e < hi**2,
            "nu_high_le_nu_low": hi <= lo,
            "nu_low_le_1": lo <= 1.0,
            "ratio": hi / lo <= self.xi / (6.0 * (1.0 - self.c_yes)),
            "rigidity_radius": math.sqrt(k * lo + (k + 1) * math.sqrt(e + lo)) <= self.xi / 2.0,
        }

    def satisfies_proof_constraints(self) -> bool:
        return all(self.constraint_checks().values())

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ProtocolParams":
        names = [f for f in cls.__dataclass_fields__ if f != "preset"]
        missing = [n for n in names if n not in obj]
        if missing:
            raise ParseError(f"params: missing field(s) {missing}")
        try:
            values = {n: (int(obj[n]) if n == "kappa" else float(obj[n])) for n in names}
        except (TypeError, ValueError) as exc:
            raise ParseError(f"params: {exc}") from None
        return cls(**values, preset=obj.get("preset", "custom"))


def _rigidity_radius(kappa: int, epsilon: float, nu_low: float) -> float:
    return math.sqrt(kappa * nu_low + (kappa + 1) * math.sqrt(epsilon + nu_low))


def choose_constants(
    kappa: int,
    xi: float,
    c_yes: float,
    delta_of_eps: Callable[[float], float],
    *,
    eps_fraction: float = 0.5,
    preset: str = "proof",
) -> ProtocolParams:
    """Pick eps, nu_low, nu_high meeting all three constant conditions, then mix.

    Order of the search: one common value small enough for the rigidity
    radius condition, then nu_high scaled down for the ratio condition, then
    eps = ``eps_fraction`` * nu_high^2. Finally nu_low is refined by
    golden-section search (on a log scale) to maximise the gap nu_high/(2Z),
    re-deriving nu_high and eps at every trial point.
    """
    if not 0.0 < xi <= c_yes < 1.0:
        raise InvalidThreshold(f"need 0 < xi <= C_YES < 1, got xi={xi}, C_YES={c_yes}")
    ratio = min(1.0, xi / (6.0 * (1.0 - c_yes)))

    def derive(nu_low: float) -> tuple[float, float, float]:
        nu_high = ratio * nu_low
        return nu_low, nu_high, eps_fraction * nu_high**2

    def feasible(nu_low: float) -> bool:
        lo, hi, e = derive(nu_low)
        return lo <= 1.0 and e < hi**2 and _rigidity_radius(kappa, e, lo) <= xi / 2.0

    # all constants equal: kappa c + (kappa + 1) sqrt(2c) <= xi^2 / 4, a quadratic in sqrt(c)
    a, b, rhs = kappa, (kappa + 1) * math.sqrt(2.0), xi * xi / 4.0
    s = (-b + math.sqrt(b * b + 4.0 * a * rhs)) / (2.0 * a)
    start = min(1.0, s * s)
    if not feasible(start):
        start *= 0.5
    if not feasible(start):
        raise Infeasible("no common starting value satisfies the rigidity radius condition")

    # largest feasible nu_low once nu_high and eps have been lowered
    lo, hi = start, start
    for _ in range(200):
        if not feasible(hi * 2.0):
            break
        lo = hi = hi * 2.0
    else:
        raise Infeasible("feasible region appears unbounded")
    hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    nu_max = lo

    def gap_at(log_nu: float) -> float:
        nu_low, nu_high, e = derive(math.exp(log_nu))
        if not feasible(nu_low):
            return -math.inf
        return mixture(e, nu_low, nu_high, delta_of_eps(e), c_yes, kappa).gap

    left, right = math.log(nu_max) - math.log(1000.0), math.log(nu_max)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = right - invphi * (right - left)
    x2 = left + invphi * (right - left)
    f1, f2 = gap_at(x1), gap_at(x2)
    for _ in range(200):
        if f1 < f2:
            left, x1, f1 = x1, x2, f2
            x2 = left + invphi * (right - left)
            f2 = gap_at(x2)
        else:
            right, x2, f2 = x2, x1, f1
            x1 = right - invphi * (right - left)
            f1 = gap_at(x1)
        if right - left < 1e-12:
            break
    candidates = [(gap_at(x), x) for x in (x1, x2, math.log(nu_max))]
    best_gap, best_x = max(candidates)
    if not math.isfinite(best_gap):
        raise Infeasible("golden-section refinement found no feasible point")
    nu_low, nu_high, e = derive(math.exp(best_x))
    params = ProtocolParams.build(
        kappa, e, nu_low, nu_high, delta_of_eps(e), c_yes=c_yes, xi=xi, preset=preset
    )
    if not params.satisfies_proof_constraints():
        raise Infeasible(f"constant search ended outside the feasible set: {params.constraint_checks()}")
    return params


def detector_delta_fn(kind: DetectorKind | str, kappa: int) -> Callable[[float], float]:
    """eps -> delta for the given detector kind on a kappa-dimensional register."""
    kind = DetectorKind.from_flag(kind) if isinstance(kind, str) else kind
    k = max(1, round(math.log2(kappa)))
    if kind is DetectorKind.NON_NEGATIVE_FOURIER:
        return lambda e: delta_nonneg(k, e, kappa)
    return lambda e: delta_noncollapsing(k, e, kappa)


def proof_params(
    kappa: int = 4,
    xi: float = DEFAULT_XI,
    c_yes: float = DEFAULT_C_YES,
    kind: DetectorKind | str = DetectorKind.NON_COLLAPSING,
) -> ProtocolParams:
    """Constants satisfying every condition of the soundness argument."""
    return choose_constants(kappa, xi, c_yes, detector_delta_fn(kind, kappa), preset="proof")


def diagnostic_params(
    kappa: int = 4,
    xi: float = DEFAULT_XI,
    c_yes: float = DEFAULT_C_YES,
    kind: DetectorKind | str = DetectorKind.NON_COLLAPSING,
) -> ProtocolParams:
    """eps = 0.0025, nu_low = nu_high = 0.1: a gap large enough to measure."""
    delta = detector_delta_fn(kind, kappa)(DIAGNOSTIC_EPSILON)
    return ProtocolParams.build(
        kappa, DIAGNOSTIC_EPSILON, DIAGNOSTIC_NU, DIAGNOSTIC_NU, delta,
        c_yes=c_yes, xi=xi, preset="diagnostic",
    )


def params_detector(params: ProtocolParams, kind: DetectorKind | str) -> DetectorSpec:
    """The detector the protocol's QuasiCheck uses under ``params``."""
    kind = DetectorKind.from_flag(kind) if isinstance(kind, str) else kind
    k = max(1, round(math.log2(params.kappa)))
    if kind is DetectorKind.ANALYTIC_COLLISION:
        return DetectorSpec(kind, k, params.epsilon, params.delta, params.kappa)
    spec = DetectorSpec.for_kind(kind, k, params.epsilon)
    if abs(spec.delta - params.delta) > 1e-12 * max(1.0, params.delta):
        raise InvalidThreshold(
            f"params carry delta={params.delta!r} but {kind.value} gives {spec.delta!r}"
        )
    return spec


# -- the protocol -------------------------------------------------------------


@dataclass(frozen=True)
class AcceptanceProfile:
    w_d: float
    w_q: float
    w_c: float
    d: float
    d_q: float
    q_reject: float

    def to_json(self) -> dict:
        return asdict(self)


def acceptance_profile(
    psi: BipartiteWitness, c: CSPSystem, params: ProtocolParams, det: DetectorSpec
) -> AcceptanceProfile:
    w_d = density_accept_prob(psi)
    qc = quasicheck_breakdown(psi, det)
    w_c = constraintcheck_accept_prob(psi, c, params.c_yes)
    return AcceptanceProfile(
        w_d=w_d,
        w_q=qc.accept_prob,
        w_c=w_c,
        d=w_d - 1.0 / psi.kappa,
        d_q=qc.reject_prob / det.delta,
        q_reject=qc.reject_prob,
    )


def protocol_accept_prob(
    psi: BipartiteWitness, c: CSPSystem, params: ProtocolParams, det: DetectorSpec
) -> float:
    """p1 * A(Density) + p2 * A(QuasiCheck) + p3 * A(ConstraintCheck)."""
    _check_csp(psi, c)
    prof = acceptance_profile(psi, c, params, det)
    return params.p1 * prof.w_d + params.p2 * prof.w_q + params.p3 * prof.w_c


def protocol_sample(
    psi: BipartiteWitness,
    c: CSPSystem,
    params: ProtocolParams,
    det: DetectorSpec,
    rng: np.random.Generator,
    shots: int | None = None,
):
    """Pick a test with probabilities (p1, p2, p3) and run it."""
    _check_csp(psi, c)
    probs = np.array([params.p1, params.p2, params.p3])
    tests = (
        lambda n: density_sample(psi, rng, n),
        lambda n: quasicheck_sample(psi, det, rng, n),
        lambda n: constraintcheck_sample(psi, c, params.c_yes, rng, n),
    )
    if shots is None:
        return int(tests[sample_index(probs, rng)](None))
    branch = sample_index(probs, rng, shots)
    out = np.zeros(shots, dtype=np.int8)
    for b in range(3):
        where = branch == b
        count = int(where.sum())
        if count:
            out[where] = tests[b](count)
    return out


def witness_to_json(psi: BipartiteWitness) -> dict:
    return state_to_json(psi.state, psi.shape)


def witness_from_json(obj: dict, R: int | None = None, kappa: int | None = None) -> BipartiteWitness:
    psi = state_from_json(obj)
    if "shape" in obj:
        R, kappa = obj["shape"]
    if R is None or kappa is None:
        raise ParseError("witness: register shape unknown (no 'shape' field)")
    try:
        return BipartiteWitness.from_state(psi, int(R), int(kappa))
    except DimMismatch as exc:
        raise ParseError(f"witness: {exc}") from None
