"""Cone-complementarity linearization for predictive gain synthesis.

The coupled LMIs ``[[P, -Phi^T], [-Phi, Q]] > 0`` together with ``PQ = I``
are not convex. The loop replaces ``PQ = I`` by the relaxation
``[[P, I], [I, Q]] >= 0`` and repeatedly minimises the linearised
``trace(P Q_k + P_k Q)``, which equals ``2 * n * n_drop`` exactly when
``PQ = I``. After every solve the gains are checked on their own with a
common-Lyapunov search; the first certified gains end the run.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .ncsmodel import (
    DEFAULT_EPSILON,
    GainSchedule,
    StabilityCertificate,
    SwitchedPlant,
    assemble_synthesis_blocks,
    stabilizability_margin,
    verify_theorem1,
)
from .sdp import SdpProblem, SdpSettings, sdp_phase1, sdp_solve

log = logging.getLogger(__name__)


class CclStatus(str, enum.Enum):
    STABILIZED = "Stabilized"
    TRACE_CONVERGED_UNVERIFIED = "TraceConvergedUnverified"
    ITERATION_LIMIT = "IterationLimit"
    INITIALIZATION_FAILED = "InitializationFailed"


class InitializationFailed(RuntimeError):
    def __init__(self, margin: float):
        super().__init__(f"no strictly feasible starting point (phase-1 margin {margin:.3e})")
        self.margin = margin


@dataclass
class CclSettings:
    max_iterations: int = 30
    trace_tol: float = 1e-4
    epsilon: float = DEFAULT_EPSILON
    sdp: SdpSettings = field(default_factory=SdpSettings)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not (self.trace_tol > 0 and self.epsilon > 0):
            raise ValueError("trace_tol and epsilon must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    inverse_gap: float
    verified: bool
    sdp_status: str = ""


@dataclass
class CclResult:
    status: CclStatus
    gains: GainSchedule
    p: np.ndarray
    q: np.ndarray
    certificate: StabilityCertificate | None
    history: list[IterationRecord]
    init_margin: float = float("nan")

    @property
    def stabilized(self) -> bool:
        return self.status is CclStatus.STABILIZED


def inverse_gap(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.linalg.norm(p @ q - np.eye(p.shape[0])))


def _initialize(plant: SwitchedPlant, settings: CclSettings, synth):
    for mode in plant.modes:
        margin = stabilizability_margin(mode, settings.epsilon, settings.sdp)
        if not margin > 0:
            log.info("mode %r is not stabilizable (margin %.3e)", mode.label, margin)
            raise InitializationFailed(margin)
    z, margin = sdp_phase1(synth.blocks, settings.sdp)
    if not margin > 0:
        raise InitializationFailed(margin)
    return synth.layout.unpack(z) + (margin,)


def ccl_initialize(plant: SwitchedPlant, settings: CclSettings | None = None):
    """Strictly feasible ``(P0, Q0, K0)`` for the relaxed LMIs.

    Raises ``InitializationFailed`` when a mode is not stabilizable on its own
    or when phase 1 finds no strictly feasible point.
    """
    settings = settings or CclSettings()
    synth = assemble_synthesis_blocks(plant, settings.epsilon)
    p, q, gains, _ = _initialize(plant, settings, synth)
    return p, q, gains


def ccl_synthesize(plant: SwitchedPlant, settings: CclSettings | None = None) -> CclResult:
    """Run the linearization loop.

    Iteration 0 checks the phase-1 gains themselves. Each later iteration
    solves one SDP and checks the resulting gains. Raises
    ``InitializationFailed`` when the relaxed LMIs have no strict solution.
    """
    settings = settings or CclSettings()
    synth = assemble_synthesis_blocks(plant, settings.epsilon)
    layout = synth.layout
    target = 2.0 * layout.order

    p, q, gains, margin = _initialize(plant, settings, synth)

    history: list[IterationRecord] = []
    cert = verify_theorem1(plant, gains, settings.epsilon, settings.sdp)
    history.append(
        IterationRecord(0, float(2.0 * np.trace(p @ q)), inverse_gap(p, q), cert.valid, "phase1")
    )
    log.info("iteration 0: objective %.6g verified %s", history[-1].objective, cert.valid)
    if cert.valid:
        return CclResult(CclStatus.STABILIZED, gains, p, q, cert, history, margin)

    status = CclStatus.ITERATION_LIMIT
    for k in range(1, settings.max_iterations + 1):
        c = layout.trace_objective(p, q)
        sol = sdp_solve(SdpProblem(c, synth.blocks), settings.sdp)
        if not sol.ok:
            history.append(IterationRecord(k, float(sol.objective_value), float("nan"), False, sol.status.value))
            log.warning("iteration %d: SDP %s (%s)", k, sol.status.value, sol.message)
            break
        p, q, gains = layout.unpack(sol.z)
        cert = verify_theorem1(plant, gains, settings.epsilon, settings.sdp)
        objective = float(sol.objective_value)
        history.append(IterationRecord(k, objective, inverse_gap(p, q), cert.valid, sol.status.value))
        log.info("iteration %d: objective %.6g gap %.3e verified %s", k, objective, history[-1].inverse_gap, cert.valid)
        if cert.valid:
            return CclResult(CclStatus.STABILIZED, gains, p, q, cert, history, margin)
        if abs(objective - target) < settings.trace_tol:
            status = CclStatus.TRACE_CONVERGED_UNVERIFIED
            break
    return CclResult(status, gains, p, q, None, history, margin)
