"""Superposition detectors.

A superposition detector on a d-dimensional register accepts every
computational basis state with certainty and accepts any state whose largest
basis overlap is at most 1 - eps with probability at most 1 - delta.

Two concrete detectors live here:

* the collision detector: one non-collapsing measurement followed by one
  collapsing measurement, accepting iff the outcomes agree. Its acceptance
  probability is the collision probability sum_e p_e^2.
* the Fourier detector for non-negative amplitude states, built on the
  Verify+ test that rejects on the zero-frequency Fourier outcome.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, InvalidThreshold, ParseError
from .state import (
    StateVector,
    computational_ensemble,
    computational_sample,
    ensemble_density,
    fourier_ensemble,
    fourier_probabilities,
    noncollapse_measure,
    sample_index,
)


class DetectorKind(str, enum.Enum):
    NON_COLLAPSING = "NonCollapsing"
    NON_NEGATIVE_FOURIER = "NonNegativeFourier"
    ANALYTIC_COLLISION = "AnalyticCollision"

    @classmethod
    def from_flag(cls, flag: str) -> "DetectorKind":
        """Map a CLI flag (noncollapsing | nonneg | analytic) or enum value."""
        aliases = {
            "noncollapsing": cls.NON_COLLAPSING,
            "nonneg": cls.NON_NEGATIVE_FOURIER,
            "analytic": cls.ANALYTIC_COLLISION,
        }
        if flag in aliases:
            return aliases[flag]
        return cls(flag)


def delta_noncollapsing(k: int, epsilon: float, dim: int | None = None) -> float:
    """Margin 2(x - x^2), x = min(eps, 1/d), of the collision detector."""
    d = 2**k if dim is None else dim
    if not 0.0 < epsilon <= 1.0 - 1.0 / d:
        raise InvalidThreshold(f"need 0 < eps <= 1 - 1/{d}, got {epsilon!r}")
    x = min(epsilon, 1.0 / d)
    return 2.0 * (x - x * x)


def delta_nonneg(k: int, epsilon: float, dim: int | None = None) -> float:
    """Margin sqrt(eps) * d^(-3/2) that the Verify+ cross-term argument proves.

    The cross term sum_{i != j} a_i a_j is at least sqrt(eps / d); the
    acceptance formula scales it by another 1/d.
    """
    d = 2**k if dim is None else dim
    if not 0.0 < epsilon <= 1.0 - 1.0 / d:
        raise InvalidThreshold(f"need 0 < eps <= 1 - 1/{d}, got {epsilon!r}")
    return math.sqrt(epsilon) * d**-1.5


def delta_nonneg_headline(k: int, epsilon: float) -> float:
    """sqrt(eps / 2^k): the advertised margin, kept for side-by-side reports."""
    return math.sqrt(epsilon / 2**k)


def nonneg_margin_exact(dim: int, epsilon: float) -> float:
    """Exact worst-case margin of the Fourier detector over non-negative states.

    Minimising (sum_i a_i)^2 over a >= 0, |a| = 1, max a_i^2 <= 1 - eps is a
    concave minimisation over a polytope in the squared amplitudes, so the
    optimum puts as many entries as possible at the cap 1 - eps and the
    remainder in one more entry.
    """
    if not 0.0 < epsilon <= 1.0 - 1.0 / dim:
        raise InvalidThreshold(f"need 0 < eps <= 1 - 1/{dim}, got {epsilon!r}")
    cap = 1.0 - epsilon
    full = int(math.floor(1.0 / cap + 1e-12))
    rest = max(0.0, 1.0 - full * cap)
    l1 = full * math.sqrt(cap) + math.sqrt(rest)
    return (l1 * l1 - 1.0) / dim


@dataclass(frozen=True)
class DetectorSpec:
    """Which detector to run and its (k, eps, delta) parameters.

    ``dim`` is the register dimension; it defaults to 2^k and only needs to
    be given for non-dyadic value registers.
    """

    kind: DetectorKind
    k: int
    epsilon: float
    delta: float
    dim: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DetectorKind(self.kind))
        if self.dim is None:
            object.__setattr__(self, "dim", 2**self.k)
        if self.k < 1 or self.dim < 2:
            raise DimMismatch("detector register needs k >= 1")
        if not 0.0 < self.delta <= 1.0:
            raise InvalidThreshold(f"delta must lie in (0, 1], got {self.delta!r}")
        if self.kind is DetectorKind.NON_COLLAPSING:
            expected = delta_noncollapsing(self.k, self.epsilon, self.dim)
        elif self.kind is DetectorKind.NON_NEGATIVE_FOURIER:
            expected = delta_nonneg(self.k, self.epsilon, self.dim)
        else:
            if not 0.0 <= self.epsilon < 1.0:
                raise InvalidThreshold(f"eps must lie in [0, 1), got {self.epsilon!r}")
            return
        if abs(self.delta - expected) > 1e-12:
            raise InvalidThreshold(
                f"{self.kind.value} with k={self.k}, eps={self.epsilon} has delta={expected!r}, "
                f"got {self.delta!r}"
            )

    @classmethod
    def noncollapsing(cls, k: int, epsilon: float) -> "DetectorSpec":
        return cls(DetectorKind.NON_COLLAPSING, k, epsilon, delta_noncollapsing(k, epsilon))

    @classmethod
    def nonneg(cls, k: int, epsilon: float) -> "DetectorSpec":
        return cls(DetectorKind.NON_NEGATIVE_FOURIER, k, epsilon, delta_nonneg(k, epsilon))

    @classmethod
    def analytic(cls, k: int, epsilon: float, delta: float | None = None) -> "DetectorSpec":
        """Collision probability used as an ideal detector.

        Without an explicit ``delta`` the collision margin is used, which the
        collision probability provably achieves.
        """
        if delta is None:
            delta = delta_noncollapsing(k, epsilon)
        return cls(DetectorKind.ANALYTIC_COLLISION, k, epsilon, delta)

    @classmethod
    def for_kind(cls, kind: DetectorKind | str, k: int, epsilon: float) -> "DetectorSpec":
        kind = DetectorKind.from_flag(kind) if isinstance(kind, str) else kind
        return {
            DetectorKind.NON_COLLAPSING: cls.noncollapsing,
            DetectorKind.NON_NEGATIVE_FOURIER: cls.nonneg,
            DetectorKind.ANALYTIC_COLLISION: cls.analytic,
        }[kind](k, epsilon)

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "k": self.k, "epsilon": self.epsilon, "delta": self.delta}
        if self.dim != 2**self.k:
            out["dim"] = self.dim
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "DetectorSpec":
        try:
            return cls(
                DetectorKind(obj["kind"]),
                int(obj["k"]),
                float(obj["epsilon"]),
                float(obj["delta"]),
                obj.get("dim"),
            )
        except KeyError as exc:
            raise ParseError(f"detector: missing field {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ParseError(f"detector: {exc}") from None


@dataclass(frozen=True)
class DetectorAnalysis:
    t: float
    x: float
    accept_prob: float


def max_basis_overlap(psi: StateVector) -> float:
    return float(psi.probabilities().max())


# -- collision detector -------------------------------------------------


def collision_accept_prob(psi: StateVector) -> float:
    """sum_e |<e|psi>|^4."""
    p = psi.probabilities()
    return min(1.0, float(np.dot(p, p)))


def excluded_sums(p: np.ndarray) -> np.ndarray:
    """others[..., x] = sum_{y != x} p[..., y], summed directly (no total - p_x cancellation)."""
    n = p.shape[-1]
    return np.stack([np.delete(p, x, axis=-1).sum(axis=-1) for x in range(n)], axis=-1)


def pairwise_cross(a: np.ndarray) -> np.ndarray:
    """sum_{i != j} conj(a_i) a_j along the last axis, from the pairs i < j only."""
    n = a.shape[-1]
    total = np.zeros(a.shape[:-1])
    for i in range(n - 1):
        total = total + 2.0 * np.sum((np.conj(a[..., i : i + 1]) * a[..., i + 1 :]).real, axis=-1)
    return total


def collision_reject_prob(psi: StateVector) -> float:
    """1 - sum_e p_e^2 = sum_e p_e sum_{f != e} p_f, accurate when the result is tiny."""
    p = psi.probabilities()
    s = p.sum()
    return float(np.dot(p, excluded_sums(p)) / (s * s))


def noncollapsing_detect(psi: StateVector, rng: np.random.Generator, shots: int | None = None):
    """One non-collapsing then one collapsing measurement; 1 iff they agree."""
    if shots is None:
        first = noncollapse_measure(psi, rng).outcome
        second = computational_sample(psi, rng)
        return int(first == second)
    first = computational_sample(psi, rng, shots)
    second = computational_sample(psi, rng, shots)
    return (first == second).astype(np.int8)


def analyze_collision(psi: StateVector, epsilon: float) -> DetectorAnalysis:
    return DetectorAnalysis(
        t=max_basis_overlap(psi),
        x=min(epsilon, 1.0 / psi.dim),
        accept_prob=collision_accept_prob(psi),
    )


# -- Fourier detector ---------------------------------------------------


def verify_plus_accept_prob(psi: StateVector) -> float:
    """1 - |sum_i a_i|^2 / d: probability Verify+ sees a non-zero frequency."""
    return float(1.0 - abs(psi.amps.sum()) ** 2 / psi.dim)


def nonneg_detect(psi: StateVector, rng: np.random.Generator, shots: int | None = None):
    """Verify+: Fourier-measure and output 0 exactly on the |+> outcome."""
    outcome = sample_index(fourier_probabilities(psi), rng, shots)
    if shots is None:
        return int(outcome != 0)
    return (outcome != 0).astype(np.int8)


def _nonneg_supdetect_sample(psi: StateVector, rng: np.random.Generator, shots: int | None):
    # Verify+ plus the 1/d offset: on the |+> outcome (probability P0 = |sum a|^2 / d)
    # accept with probability min(1, 1 / (d P0)), so acceptance is min(1, A(Verify+) + 1/d).
    probs = fourier_probabilities(psi)
    p0 = probs[0]
    rescue = 1.0 if p0 * psi.dim <= 1.0 else 1.0 / (p0 * psi.dim)
    outcome = sample_index(probs, rng, shots)
    coin = rng.random(shots)
    accept = (outcome != 0) | (coin < rescue)
    if shots is None:
        return int(accept)
    return accept.astype(np.int8)


# -- dispatch -------------------------------------------------------------


def _check_dim(spec: DetectorSpec, psi: StateVector) -> None:
    if psi.dim != spec.dim:
        raise DimMismatch(f"detector expects dim {spec.dim}, state has dim {psi.dim}")


def detector_accept_prob(spec: DetectorSpec, psi: StateVector) -> float:
    _check_dim(spec, psi)
    if spec.kind is DetectorKind.NON_NEGATIVE_FOURIER:
        return min(1.0, max(0.0, verify_plus_accept_prob(psi) + 1.0 / psi.dim))
    return collision_accept_prob(psi)


def detector_reject_prob(spec: DetectorSpec, psi: StateVector) -> float:
    """1 - detector_accept_prob, computed without cancellation near acceptance 1."""
    _check_dim(spec, psi)
    if spec.kind is DetectorKind.NON_NEGATIVE_FOURIER:
        # |sum a|^2 - sum |a|^2 = sum_{i != j} conj(a_i) a_j
        cross = float(pairwise_cross(psi.amps))
        return min(1.0, max(0.0, cross / psi.dim))
    return collision_reject_prob(psi)


def detector_sample(
    spec: DetectorSpec, psi: StateVector, rng: np.random.Generator, shots: int | None = None
):
    """Sampled run(s) of the detector; mean converges to detector_accept_prob."""
    _check_dim(spec, psi)
    if spec.kind is DetectorKind.NON_NEGATIVE_FOURIER:
        return _nonneg_supdetect_sample(psi, rng, shots)
    return noncollapsing_detect(psi, rng, shots)


# -- identical-ensemble experiment ---------------------------------------


def distinguish_ensembles_experiment(k: int, n: int, rng: np.random.Generator) -> dict:
    """Run the collision detector on uniform draws from two ensembles.

    Both ensembles (computational basis states, Fourier basis states) have
    density matrix I / 2^k, yet the detector accepts the first with
    certainty and the second with probability 1/2^k.
    """
    if k not in (1, 2, 3):
        raise ValueError(f"k must be 1, 2 or 3, got {k}")
    if n < 10_000:
        raise ValueError(f"need n >= 10^4 samples, got {n}")
    d = 2**k
    comp = computational_ensemble(k)
    four = fourier_ensemble(k)
    weights = np.full(d, 1.0 / d)
    rho_comp = ensemble_density(comp, weights).entries
    rho_four = ensemble_density(four, weights).entries

    def run(states):
        picks = np.bincount(rng.integers(0, d, size=n), minlength=d)
        accepted = sum(int(noncollapsing_detect(s, rng, int(c)).sum()) for s, c in zip(states, picks))
        return accepted / n

    acc_comp = run(comp)
    acc_four = run(four)
    analytic_four = float(np.mean([collision_accept_prob(s) for s in four]))
    return {
        "k": k,
        "n": n,
        "acc_computational": acc_comp,
        "acc_fourier": acc_four,
        "acc_fourier_analytic": analytic_four,
        "acceptance_gap": acc_comp - acc_four,
        "density_gap": float(np.max(np.abs(rho_comp - rho_four))),
    }
