"""Plants shared by several test modules."""
from __future__ import annotations

import json
from importlib import resources

import numpy as np

from ncsgain.files import parse_gains, parse_model
from ncsgain.ncsmodel import GainSchedule, PlantMode, SwitchedPlant

# published discretization at h = 0.1 (four decimals)
PUBLISHED_F = [
    [[0.6703, -0.0018], [0.0294, 0.5134]],
    [[0.6703, -0.0015], [0.0378, 0.3678]],
    [[0.6702, -0.0010], [0.0502, 0.1353]],
]
PUBLISHED_G = [[[0.1648], [0.0035]], [[0.1648], [0.0048]], [[0.1648], [0.0073]]]
PUBLISHED_EIG = [(0.67, 0.5137), (0.671, 0.368), (0.6701, 0.1354)]
X0 = np.array([-3.0, 2.0])


def data_text(name: str) -> str:
    return resources.files("ncsgain").joinpath("data", name).read_text(encoding="utf-8")


def demo_model():
    return parse_model(data_text("dc_motor.json"))


def demo_plant(h: float = 0.1) -> SwitchedPlant:
    return demo_model().plant(h)


def published_gains(h: float = 0.1) -> GainSchedule:
    name = "dc_motor_gains_h010.json" if h == 0.1 else "dc_motor_gains_h020.json"
    return parse_gains(data_text(name)).gains


def scalar_plant(f, g, n_drop=1, h=1.0) -> SwitchedPlant:
    return SwitchedPlant((PlantMode(np.array([[f]]), np.array([[g]]), "s"),), h, n_drop)


def oscillating_plant() -> SwitchedPlant:
    """Two open-loop unstable modes; linearization needs several iterations."""
    return SwitchedPlant(
        (
            PlantMode(np.array([[1.1, 0.3], [-0.3, 1.0]]), np.array([[0.0], [1.0]]), "a"),
            PlantMode(np.array([[1.0, 0.2], [0.0, 1.05]]), np.array([[0.0], [1.0]]), "b"),
        ),
        1.0,
        2,
    )


def two_scalar_modes() -> SwitchedPlant:
    return SwitchedPlant(
        (
            PlantMode(np.array([[1.2]]), np.array([[1.0]]), "fast"),
            PlantMode(np.array([[0.9]]), np.array([[0.5]]), "slow"),
        ),
        1.0,
        2,
    )


def dump(doc) -> str:
    return json.dumps(doc)
