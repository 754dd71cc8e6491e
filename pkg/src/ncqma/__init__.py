"""Simulation toolkit for QMA-style verification with non-collapsing measurements.

Submodules: ``state`` (pure states and measurements), ``detectors``
(superposition detectors), ``csp`` (gap constraint systems), ``verifier``
(the three tests and their mixture), ``analysis`` (soundness tools) and
``cli``.
"""

from .csp import CSPSystem, Constraint, GapInstance, Label, gen_no_instance, gen_yes_instance
from .detectors import DetectorKind, DetectorSpec
from .errors import NCQMAError
from .state import StateVector
from .verifier import (
    BipartiteWitness,
    ProtocolParams,
    diagnostic_params,
    proof_params,
    protocol_accept_prob,
)

__all__ = [
    "BipartiteWitness",
    "CSPSystem",
    "Constraint",
    "DetectorKind",
    "DetectorSpec",
    "GapInstance",
    "Label",
    "NCQMAError",
    "ProtocolParams",
    "StateVector",
    "diagnostic_params",
    "gen_no_instance",
    "gen_yes_instance",
    "proof_params",
    "protocol_accept_prob",
]
