"""Predictive state-feedback synthesis for switched plants over lossy networks."""
from .cclsynth import CclResult, CclSettings, CclStatus, InitializationFailed, ccl_synthesize
from .ncsmodel import (
    ContinuousMode,
    GainSchedule,
    PlantMode,
    StabilityCertificate,
    SwitchedPlant,
    build_phi,
    discretize,
    verify_theorem1,
)
from .sdp import SdpSettings, SdpStatus, sdp_solve
from .sim import DropModel, ModelViolation, SimConfig, SwitchSignal, simulate

__version__ = "0.1.0"
