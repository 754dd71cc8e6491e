"""Explicit constraint systems with (1, delta) promise labels.

A constraint is a q-tuple of variable indices together with the set of
allowed value tuples in Sigma^q. Value tuples are identified with integers in
[0, |Sigma|^q) by reading them as big-endian base-|Sigma| numerals, which is
how the value register of a witness is indexed.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import BadIndex, ParseError, TooLarge

MAX_ASSIGNMENTS = 10**6


class Label(str, enum.Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Constraint:
    vars: tuple[int, ...]
    allowed: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(int(v) for v in self.vars))
        object.__setattr__(self, "allowed", tuple(tuple(int(s) for s in x) for x in self.allowed))


@dataclass(frozen=True)
class CSPSystem:
    """(N, R, q, Sigma) constraint system; constraints form a multiset kept in order."""

    n_vars: int
    q: int
    alphabet_size: int
    constraints: tuple[Constraint, ...]
    _masks: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.n_vars < 1 or self.q < 1 or self.alphabet_size < 2:
            raise ValueError("need N >= 1, q >= 1 and |Sigma| >= 2")
        masks = np.zeros((len(self.constraints), self.kappa), dtype=bool)
        for j, con in enumerate(self.constraints):
            if len(con.vars) != self.q:
                raise ValueError(f"constraint {j} has arity {len(con.vars)}, expected {self.q}")
            if any(not 0 <= v < self.n_vars for v in con.vars):
                raise ValueError(f"constraint {j} references a variable outside [0, {self.n_vars})")
            for x in con.allowed:
                if len(x) != self.q or any(not 0 <= s < self.alphabet_size for s in x):
                    raise ValueError(f"constraint {j} allows {x}, which is not in Sigma^{self.q}")
                masks[j, self.encode(x)] = True
        masks.flags.writeable = False
        object.__setattr__(self, "_masks", masks)

    @property
    def R(self) -> int:
        return len(self.constraints)

    @property
    def N(self) -> int:
        return self.n_vars

    @property
    def kappa(self) -> int:
        """Value-register dimension |Sigma|^q."""
        return self.alphabet_size**self.q

    def encode(self, x) -> int:
        idx = 0
        for s in x:
            idx = idx * self.alphabet_size + int(s)
        return idx

    def decode(self, idx: int) -> tuple[int, ...]:
        out = []
        for _ in range(self.q):
            idx, s = divmod(idx, self.alphabet_size)
            out.append(s)
        return tuple(reversed(out))

    def allowed_mask(self) -> np.ndarray:
        """R x kappa boolean table: mask[j, x] iff value x satisfies constraint j."""
        return self._masks


@dataclass(frozen=True)
class GapInstance:
    system: CSPSystem
    delta: float
    label: Label = Label.UNKNOWN
    planted: tuple[int, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")

    def promise_holds(self) -> bool:
        if self.label is Label.YES:
            return csp_value(self.system) == 1.0
        if self.label is Label.NO:
            return local_value(self.system) <= self.delta
        return True


# -- values ------------------------------------------------------------------


def _assignment_table(c: CSPSystem) -> np.ndarray:
    size = c.alphabet_size**c.n_vars
    if size > MAX_ASSIGNMENTS:
        raise TooLarge(f"|Sigma|^N = {size} exceeds {MAX_ASSIGNMENTS}")
    return np.indices((c.alphabet_size,) * c.n_vars, dtype=np.int64).reshape(c.n_vars, -1).T


def _satisfied_counts(c: CSPSystem) -> tuple[np.ndarray, np.ndarray]:
    table = _assignment_table(c)
    masks = c.allowed_mask()
    counts = np.zeros(table.shape[0], dtype=np.int64)
    powers = c.alphabet_size ** np.arange(c.q - 1, -1, -1)
    for j, con in enumerate(c.constraints):
        idx = table[:, list(con.vars)] @ powers
        counts += masks[j, idx]
    return table, counts


def csp_value(c: CSPSystem) -> float:
    """Maximum fraction of satisfied constraints over all assignments."""
    _, counts = _satisfied_counts(c)
    return float(counts.max()) / c.R


def best_assignment(c: CSPSystem) -> tuple[int, ...]:
    """An assignment attaining csp_value (lexicographically first)."""
    table, counts = _satisfied_counts(c)
    return tuple(int(v) for v in table[int(np.argmax(counts))])


def local_value(c: CSPSystem) -> float:
    """Fraction of constraints that are individually satisfiable (allowed set non-empty)."""
    return float(np.count_nonzero(c.allowed_mask().any(axis=1))) / c.R


def is_satisfied(c: CSPSystem, j: int, x) -> bool:
    if not 0 <= j < c.R:
        raise BadIndex(f"constraint index {j} outside [0, {c.R})")
    x = tuple(int(s) for s in x)
    if len(x) != c.q or any(not 0 <= s < c.alphabet_size for s in x):
        return False
    return bool(c.allowed_mask()[j, c.encode(x)])


def restriction(c: CSPSystem, assignment, j: int) -> tuple[int, ...]:
    """The value tuple that ``assignment`` gives to the variables of constraint j."""
    return tuple(int(assignment[v]) for v in c.constraints[j].vars)


# -- generators ----------------------------------------------------------


def _random_vars(rng: np.random.Generator, n_vars: int, q: int) -> tuple[int, ...]:
    replace = q > n_vars
    return tuple(int(v) for v in rng.choice(n_vars, size=q, replace=replace))


def _all_tuples(q: int, sigma: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(sigma), repeat=q))


def gen_yes_instance(
    N: int, R: int, q: int, seed: int, *, sigma: int = 2, delta: float = 1 / 3
) -> GapInstance:
    """Plant a random assignment and build R constraints it satisfies."""
    rng = np.random.default_rng(seed)
    planted = tuple(int(v) for v in rng.integers(0, sigma, size=N))
    tuples = _all_tuples(q, sigma)
    constraints = []
    for _ in range(R):
        vars_ = _random_vars(rng, N, q)
        keep = tuple(planted[v] for v in vars_)
        extra = rng.random(len(tuples)) < 0.5
        allowed = [x for x, e in zip(tuples, extra) if e or x == keep]
        constraints.append(Constraint(vars_, tuple(allowed)))
    system = CSPSystem(N, q, sigma, tuple(constraints))
    return GapInstance(system, delta, Label.YES, planted=planted)


def empty_constraint_count(R: int, delta: float) -> int:
    """ceil((1 - delta) R), computed exactly for rational-looking delta."""
    frac = Fraction(delta).limit_denominator(10**6)
    return math.ceil((1 - frac) * R)


def gen_no_instance(
    N: int, R: int, q: int, delta: float, seed: int, *, sigma: int = 2
) -> GapInstance:
    """At least ceil((1 - delta) R) constraints get an empty allowed set."""
    rng = np.random.default_rng(seed)
    n_empty = empty_constraint_count(R, delta)
    empty = set(int(j) for j in rng.permutation(R)[:n_empty])
    tuples = _all_tuples(q, sigma)
    constraints = []
    for j in range(R):
        vars_ = _random_vars(rng, N, q)
        if j in empty:
            allowed = ()
        else:
            pick = rng.random(len(tuples)) < 0.5
            pick[rng.integers(len(tuples))] = True
            allowed = tuple(x for x, p in zip(tuples, pick) if p)
        constraints.append(Constraint(vars_, allowed))
    return GapInstance(CSPSystem(N, q, sigma, tuple(constraints)), delta, Label.NO)


# -- JSON ----------------------------------------------------------------


def instance_to_json(inst: GapInstance) -> dict:
    c = inst.system
    return {
        "N": c.n_vars,
        "R": c.R,
        "q": c.q,
        "sigma": c.alphabet_size,
        "constraints": [
            {"vars": list(con.vars), "allowed": [list(x) for x in con.allowed]}
            for con in c.constraints
        ],
        "delta": inst.delta,
        "label": inst.label.value,
    }


def serialize(inst: GapInstance) -> str:
    return json.dumps(instance_to_json(inst))


def _field(obj: dict, name: str, kind, where: str = ""):
    if name not in obj:
        raise ParseError(f"{where}missing field {name!r}")
    value = obj[name]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ParseError(f"{where}{name}: expected an integer, got {value!r}")
    if kind is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise ParseError(f"{where}{name}: expected a number, got {value!r}")
    if kind is list and not isinstance(value, list):
        raise ParseError(f"{where}{name}: expected a list")
    return value


def instance_from_json(obj) -> GapInstance:
    if not isinstance(obj, dict):
        raise ParseError("instance: expected a JSON object")
    n_vars = _field(obj, "N", int)
    R = _field(obj, "R", int)
    q = _field(obj, "q", int)
    sigma = _field(obj, "sigma", int)
    raw = _field(obj, "constraints", list)
    delta = float(_field(obj, "delta", float))
    label = _field(obj, "label", str)
    if len(raw) != R:
        raise ParseError(f"R={R} but {len(raw)} constraints given")
    constraints = []
    for j, item in enumerate(raw):
        where = f"constraints[{j}]."
        if not isinstance(item, dict):
            raise ParseError(f"constraints[{j}]: expected an object")
        vars_ = _field(item, "vars", list, where)
        allowed = _field(item, "allowed", list, where)
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in vars_):
            raise ParseError(f"{where}vars: expected integers")
        if not all(isinstance(x, list) for x in allowed):
            raise ParseError(f"{where}allowed: expected a list of value tuples")
        constraints.append(Constraint(tuple(vars_), tuple(tuple(x) for x in allowed)))
    try:
        label = Label(label)
    except ValueError:
        raise ParseError(f"label: expected yes|no|unknown, got {label!r}") from None
    try:
        system = CSPSystem(n_vars, q, sigma, tuple(constraints))
        return GapInstance(system, delta, label)
    except (ValueError, TypeError) as exc:
        raise ParseError(str(exc)) from None


def parse(text: str) -> GapInstance:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return instance_from_json(obj)
