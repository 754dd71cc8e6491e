"""Finite-dimensional pure states, measurements and distance utilities.

Everything here works on dense complex vectors of arbitrary (not necessarily
power-of-two) dimension. Sampling functions take an explicit
``numpy.random.Generator``; the same seed always gives the same transcript.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimMismatch, InvalidEffect, InvalidWeights, ParseError, ZeroVector

NORM_TOL = 1e-12
PSD_TOL = 1e-10
MAX_DIM = 4096


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    """Unit-norm complex amplitude vector.

    The amplitude array is copied on construction and frozen, so a state can
    be shared between callers (and threads) without defensive copies.
    """

    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=np.complex128).reshape(-1)
        if amps.size < 1:
            raise DimMismatch("a state needs dim >= 1")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized: |psi|^2 = {norm2!r}")
        object.__setattr__(self, "amps", _readonly(amps))

    @property
    def dim(self) -> int:
        return int(self.amps.size)

    def probabilities(self) -> np.ndarray:
        """Computational-basis outcome distribution |amps|^2."""
        return np.abs(self.amps) ** 2

    def __len__(self):
        return self.dim


@dataclass(frozen=True)
class RegisterSplit:
    """Factorisation dim = left_dim * right_dim (index register first)."""

    left_dim: int
    right_dim: int

    def __post_init__(self):
        if self.left_dim < 1 or self.right_dim < 1:
            raise DimMismatch("register dimensions must be positive")

    @property
    def dim(self) -> int:
        return self.left_dim * self.right_dim

    def check(self, psi: StateVector) -> None:
        if self.dim != psi.dim:
            raise DimMismatch(
                f"split {self.left_dim}x{self.right_dim} does not match dim {psi.dim}"
            )


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        rho = np.array(self.entries, dtype=np.complex128)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 1:
            raise DimMismatch(f"density matrix must be square, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > NORM_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > NORM_TOL:
            raise ValueError(f"density matrix trace {np.trace(rho)!r} != 1")
        if np.linalg.eigvalsh(rho).min() < -PSD_TOL:
            raise ValueError("density matrix is not positive semidefinite")
        object.__setattr__(self, "entries", _readonly(rho))

    @property
    def dim(self) -> int:
        return int(self.entries.shape[0])


@dataclass(frozen=True)
class MeasurementRecord:
    """Outcome of one measurement.

    For a non-collapsing measurement ``post_state`` is the very object that
    was measured. For a collapsing measurement of the index register it is
    the normalised residual state of the value register (``right_dim``
    amplitudes) belonging to the observed index ``outcome``.
    """

    outcome: int
    collapsed: bool
    post_state: StateVector


def normalize(raw_amps: Sequence[complex] | np.ndarray) -> StateVector:
    amps = np.asarray(raw_amps, dtype=np.complex128).reshape(-1)
    norm = np.linalg.norm(amps)
    if amps.size == 0 or norm == 0.0:
        raise ZeroVector("cannot normalize the zero vector")
    if not np.isfinite(norm):
        raise ValueError("amplitudes must be finite")
    return StateVector(amps / norm)


def uniform_state(d: int) -> StateVector:
    """|+> = (1/sqrt d) sum_i |i>."""
    if d < 1:
        raise DimMismatch("dimension must be >= 1")
    return StateVector(np.full(d, 1.0 / np.sqrt(d), dtype=np.complex128))


def basis_state(d: int, index: int) -> StateVector:
    if not 0 <= index < d:
        raise IndexError(f"basis index {index} out of range for dim {d}")
    amps = np.zeros(d, dtype=np.complex128)
    amps[index] = 1.0
    return StateVector(amps)


def squared_overlap(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2."""
    if a.dim != b.dim:
        raise DimMismatch(f"dims differ: {a.dim} vs {b.dim}")
    return min(1.0, float(abs(np.vdot(a.amps, b.amps)) ** 2))


def trace_distance(a: StateVector, b: StateVector) -> float:
    """Trace distance of two pure states, sqrt(1 - |<a|b>|^2)."""
    return float(np.sqrt(max(0.0, 1.0 - squared_overlap(a, b))))


def fourier_basis(d: int) -> np.ndarray:
    """Columns are the Z_d Fourier vectors f_m[n] = exp(2 pi i m n / d) / sqrt(d).

    Column 0 is the uniform state |+>.
    """
    n = np.arange(d)
    return np.exp(2j * np.pi * np.outer(n, n) / d) / np.sqrt(d)


def fourier_probabilities(psi: StateVector) -> np.ndarray:
    """Outcome distribution |<f_m|psi>|^2 of a Fourier-basis measurement."""
    # <f_m|psi> = sum_n exp(-2 pi i m n / d) psi_n / sqrt(d), i.e. numpy's forward FFT
    coeffs = np.fft.fft(psi.amps) / np.sqrt(psi.dim)
    return np.abs(coeffs) ** 2


def sample_index(probs: np.ndarray, rng: np.random.Generator, shots: int | None = None):
    """Draw outcome indices from an (unnormalised) probability vector.

    Zero-probability outcomes are never returned. Returns an ``int`` when
    ``shots`` is None, otherwise an int64 array of length ``shots``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(probs)
    total = cdf[-1]
    last = int(np.flatnonzero(probs > 0)[-1])
    u = rng.random(shots)
    idx = np.searchsorted(cdf, u * total, side="right")
    idx = np.minimum(idx, last)
    if shots is None:
        return int(idx)
    return idx.astype(np.int64)


def collapse_measure(
    psi: StateVector, split: RegisterSplit, rng: np.random.Generator
) -> MeasurementRecord:
    """Measure the left (index) register in the computational basis."""
    split.check(psi)
    rows = psi.amps.reshape(split.left_dim, split.right_dim)
    weights = np.sum(np.abs(rows) ** 2, axis=1)
    j = sample_index(weights, rng)
    residual = rows[j] / np.sqrt(weights[j])
    return MeasurementRecord(outcome=j, collapsed=True, post_state=StateVector(residual))


def noncollapse_measure(psi: StateVector, rng: np.random.Generator) -> MeasurementRecord:
    """Sample a computational-basis outcome without disturbing ``psi``."""
    i = sample_index(psi.probabilities(), rng)
    return MeasurementRecord(outcome=i, collapsed=False, post_state=psi)


def computational_sample(psi: StateVector, rng: np.random.Generator, shots: int | None = None):
    """Outcome(s) of a full collapsing computational-basis measurement."""
    return sample_index(psi.probabilities(), rng, shots)


def fourier_sample(psi: StateVector, rng: np.random.Generator, shots: int | None = None):
    """Outcome(s) of a Fourier-basis measurement; 0 is the |+> outcome."""
    return sample_index(fourier_probabilities(psi), rng, shots)


def expectation(op: np.ndarray, psi: StateVector) -> float:
    return float(np.vdot(psi.amps, op @ psi.amps).real)


def check_effect(effect: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Validate 0 <= effect <= I and return it as a complex array."""
    effect = np.asarray(effect, dtype=np.complex128)
    if effect.ndim != 2 or effect.shape[0] != effect.shape[1]:
        raise InvalidEffect(f"effect must be a square matrix, got {effect.shape}")
    if np.max(np.abs(effect - effect.conj().T)) > NORM_TOL:
        raise InvalidEffect("effect is not Hermitian")
    eig = np.linalg.eigvalsh(effect)
    if eig.min() < -tol or eig.max() > 1.0 + tol:
        raise InvalidEffect(f"effect eigenvalues outside [0, 1]: [{eig.min()}, {eig.max()}]")
    return effect


def fuchs_bound_holds(effect: np.ndarray, psi1: StateVector, psi2: StateVector) -> bool:
    """|<psi1|E|psi1> - <psi2|E|psi2>| <= sqrt(1 - |<psi1|psi2>|^2) for 0 <= E <= I."""
    effect = check_effect(effect)
    if psi1.dim != psi2.dim or effect.shape[0] != psi1.dim:
        raise DimMismatch("effect and states must share one dimension")
    lhs = abs(expectation(effect, psi1) - expectation(effect, psi2))
    return lhs <= trace_distance(psi1, psi2) + PSD_TOL


def ensemble_density(states: Sequence[StateVector], weights: Sequence[float]) -> DensityMatrix:
    """sum_i w_i |psi_i><psi_i|."""
    weights = np.asarray(weights, dtype=np.float64)
    if len(states) == 0 or weights.shape != (len(states),):
        raise InvalidWeights("need exactly one weight per state")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > NORM_TOL:
        raise InvalidWeights(f"weights must be a probability vector (sum={weights.sum()!r})")
    dim = states[0].dim
    if any(s.dim != dim for s in states):
        raise DimMismatch("ensemble states have different dimensions")
    mat = np.stack([s.amps for s in states])
    rho = (mat.T * weights) @ mat.conj()
    return DensityMatrix(rho)


def computational_ensemble(k: int) -> list[StateVector]:
    d = 2**k
    return [basis_state(d, i) for i in range(d)]


def fourier_ensemble(k: int) -> list[StateVector]:
    d = 2**k
    basis = fourier_basis(d)
    return [normalize(basis[:, m]) for m in range(d)]


# -- JSON ---------------------------------------------------------------


def state_to_json(psi: StateVector, shape: tuple[int, int] | None = None) -> dict:
    """{"dim": d, "amps": [[re, im], ...]} plus an optional register shape."""
    out = {"dim": psi.dim, "amps": [[float(a.real), float(a.imag)] for a in psi.amps]}
    if shape is not None:
        out["shape"] = [int(shape[0]), int(shape[1])]
    return out


def state_from_json(obj: dict) -> StateVector:
    if not isinstance(obj, dict):
        raise ParseError("state: expected a JSON object")
    for key in ("dim", "amps"):
        if key not in obj:
            raise ParseError(f"state: missing field {key!r}")
    try:
        pairs = np.asarray(obj["amps"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"state.amps: {exc}") from None
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ParseError("state.amps: expected a list of [re, im] pairs")
    if pairs.shape[0] != obj["dim"]:
        raise ParseError(f"state.dim={obj['dim']} but {pairs.shape[0]} amplitudes given")
    try:
        return StateVector(pairs[:, 0] + 1j * pairs[:, 1])
    except ValueError as exc:
        raise ParseError(f"state.amps: {exc}") from None


def density_to_json(rho: DensityMatrix) -> list:
    """Row-major nested [re, im] pairs."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in rho.entries]
