"""Time-driven closed-loop simulation of the networked predictive loop.

Per step ``k``:

1. link outcomes come from a pre-generated drop sequence;
2. if both links succeed the controller sends ``K_q x(k)`` for every
   ``q`` and the actuator buffer is refilled (age 0);
3. the actuator applies buffer entry ``age + 1``;
4. the plant advances with the mode active during step ``k``;
5. the mode for step ``k + 1`` is chosen by the switching signal.

Network delays are taken to be zero; the timing assumption
``h > tau_1 + tau_2`` (sensor and controller transmission both fit in one
period) is what makes that legitimate.

Random streams: ``SeedSequence([seed, 0])`` drives the two links (one
uniform pair per step, sensor first) and ``SeedSequence([seed, 1])`` the
switching signal, both through PCG64, so traces are reproducible across
platforms.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .ncsmodel import GainSchedule, SwitchedPlant, lyapunov_value


class ModelViolation(RuntimeError):
    """The actuator ran out of buffered inputs (more than n_drop - 1 losses in a row)."""


class DropKind(str, enum.Enum):
    SCHEDULE = "Schedule"
    BERNOULLI_LINKS = "BernoulliLinks"
    UNIFORM_ETA = "UniformEta"


class SwitchKind(str, enum.Enum):
    FIXED = "Fixed"
    SCHEDULE = "Schedule"
    RANDOM_AT_EFFECTIVE = "RandomAtEffective"
    RANDOM_EVERY_STEP = "RandomEveryStep"


def _stream(seed: int, purpose: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, purpose])))


@dataclass
class DropModel:
    kind: DropKind = DropKind.BERNOULLI_LINKS
    p_sensor_loss: float = 0.0
    p_control_loss: float = 0.0
    schedule: tuple[list[bool], list[bool]] | None = None
    enforce_bound: bool = True
    seed: int = 0

    def __post_init__(self):
        self.kind = DropKind(self.kind)
        for p in (self.p_sensor_loss, self.p_control_loss):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"loss probability {p} outside [0, 1]")
        if self.kind is DropKind.SCHEDULE and self.schedule is None:
            raise ValueError("a Schedule drop model needs per-link schedules")


@dataclass
class SwitchSignal:
    kind: SwitchKind = SwitchKind.FIXED
    mode_index: int = 1
    schedule: list[int] | None = None
    dwell_min: int = 1
    seed: int = 0

    def __post_init__(self):
        self.kind = SwitchKind(self.kind)
        if self.kind is SwitchKind.SCHEDULE and self.schedule is None:
            raise ValueError("a Schedule switching signal needs a mode schedule")
        if self.dwell_min < 1:
            raise ValueError("dwell_min must be at least 1")


@dataclass
class DropSequence:
    s1_ok: np.ndarray
    s2_ok: np.ndarray

    @property
    def effective(self) -> np.ndarray:
        return self.s1_ok & self.s2_ok

    def __len__(self) -> int:
        return self.s1_ok.size


def generate_drop_sequence(model: DropModel, horizon: int, n_drop: int) -> DropSequence:
    """Link outcomes for ``horizon`` steps.

    With ``enforce_bound`` a run of ``n_drop - 1`` ineffective steps is
    followed by a forced effective step, and step 0 is forced effective so
    the buffer is filled before the first control is drawn.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    rng = _stream(model.seed, 0)
    if model.kind is DropKind.UNIFORM_ETA:
        s1 = np.ones(horizon, dtype=bool)
        s2 = np.ones(horizon, dtype=bool)
        k = 0
        while k < horizon:
            eta = int(rng.integers(1, n_drop + 1))
            for j in range(k + 1, min(k + eta, horizon)):
                # attribute each loss to one link at random
                if rng.random() < 0.5:
                    s1[j] = False
                else:
                    s2[j] = False
            k += eta
        return DropSequence(s1, s2)

    if model.kind is DropKind.SCHEDULE:
        s1 = np.asarray(model.schedule[0], dtype=bool)
        s2 = np.asarray(model.schedule[1], dtype=bool)
        if s1.size < horizon or s2.size < horizon:
            raise ValueError(f"schedule covers {min(s1.size, s2.size)} steps, horizon is {horizon}")
        s1, s2 = s1[:horizon].copy(), s2[:horizon].copy()
    else:
        u = rng.random((horizon, 2))
        s1 = u[:, 0] >= model.p_sensor_loss
        s2 = u[:, 1] >= model.p_control_loss

    if model.enforce_bound:
        run = n_drop - 1
        for k in range(horizon):
            if s1[k] and s2[k]:
                run = 0
            elif run >= n_drop - 1:
                s1[k] = s2[k] = True
                run = 0
            else:
                run += 1
    return DropSequence(s1, s2)


@dataclass
class SimConfig:
    plant: SwitchedPlant
    gains: GainSchedule
    x0: np.ndarray
    horizon: int
    drop: DropModel = field(default_factory=DropModel)
    switching: SwitchSignal = field(default_factory=SwitchSignal)
    settle_threshold: float | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.x0.size != self.plant.n:
            raise ValueError(f"x0 has {self.x0.size} entries, plant has {self.plant.n} states")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.gains.check_plant(self.plant)
        if self.settle_threshold is None:
            self.settle_threshold = 1e-3 * float(np.linalg.norm(self.x0))


@dataclass
class SimTrace:
    sample_period: float
    x: np.ndarray
    u: np.ndarray
    mode: np.ndarray
    s1_ok: np.ndarray
    s2_ok: np.ndarray
    effective: np.ndarray
    buffer_age: np.ndarray
    stamp: np.ndarray
    final_state: np.ndarray
    settle_threshold: float

    @property
    def horizon(self) -> int:
        return self.x.shape[0]

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.horizon) * self.sample_period

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(np.vstack([self.x, self.final_state]), axis=1)

    @property
    def settled_at(self) -> int | None:
        """First step from which ``|x|`` stays at or below the threshold."""
        above = np.flatnonzero(self.norms > self.settle_threshold)
        if above.size == 0:
            return 0
        k = int(above[-1]) + 1
        return k if k <= self.horizon - 1 else None

    @property
    def max_norm_after_settle(self) -> float | None:
        k = self.settled_at
        return None if k is None else float(np.max(self.norms[k:]))


def simulate(config: SimConfig) -> SimTrace:
    plant, gains = config.plant, config.gains
    horizon, n_drop = config.horizon, plant.n_drop
    drops = generate_drop_sequence(config.drop, horizon, n_drop)
    effective = drops.effective
    sw = config.switching
    rng = _stream(sw.seed, 1)

    def draw() -> int:
        return int(rng.integers(0, plant.r))

    if sw.kind is SwitchKind.SCHEDULE:
        if len(sw.schedule) < horizon:
            raise ValueError(f"mode schedule covers {len(sw.schedule)} steps, horizon is {horizon}")
        modes_in = [int(v) - 1 for v in sw.schedule]
        if min(modes_in[:horizon]) < 0 or max(modes_in[:horizon]) >= plant.r:
            raise ValueError(f"mode schedule has indices outside 1..{plant.r}")
        mode = modes_in[0]
    elif sw.kind is SwitchKind.FIXED:
        if not 1 <= sw.mode_index <= plant.r:
            raise ValueError(f"mode_index {sw.mode_index} outside 1..{plant.r}")
        mode = sw.mode_index - 1
    else:
        mode = draw()

    n, m = plant.n, plant.m
    xs = np.zeros((horizon, n))
    us = np.zeros((horizon, m))
    modes = np.zeros(horizon, dtype=int)
    ages = np.full(horizon, -1, dtype=int)
    stamps = np.full(horizon, -1, dtype=int)
    x = config.x0.copy()
    buffer = None
    stamp = -1
    age = -1
    empty_steps = 0
    dwell = 0
    for k in range(horizon):
        if effective[k]:
            buffer = [gains[q] @ x for q in range(1, n_drop + 1)]
            stamp, age = k, 0
        elif buffer is not None:
            age += 1
        if buffer is None:
            empty_steps += 1
            if empty_steps >= n_drop:
                raise ModelViolation(f"no effective packet in the first {empty_steps} steps")
            u = np.zeros(m)
        elif age >= n_drop:
            raise ModelViolation(f"buffer exhausted at step {k} (age {age}, n_drop {n_drop})")
        else:
            u = buffer[age]
        xs[k], us[k], modes[k], ages[k], stamps[k] = x, u, mode + 1, age, stamp
        f = plant.modes[mode]
        x = f.f @ x + f.g @ u

        if k + 1 < horizon:
            if sw.kind is SwitchKind.SCHEDULE:
                mode = modes_in[k + 1]
            elif sw.kind is SwitchKind.RANDOM_AT_EFFECTIVE:
                if effective[k + 1]:
                    dwell += 1
                    if dwell >= sw.dwell_min:
                        new = draw()
                        if new != mode:
                            mode, dwell = new, 0
            elif sw.kind is SwitchKind.RANDOM_EVERY_STEP:
                dwell += 1
                if dwell >= sw.dwell_min:
                    new = draw()
                    if new != mode:
                        mode, dwell = new, 0

    return SimTrace(
        sample_period=plant.sample_period,
        x=xs,
        u=us,
        mode=modes,
        s1_ok=drops.s1_ok,
        s2_ok=drops.s2_ok,
        effective=effective,
        buffer_age=ages,
        stamp=stamps,
        final_state=x,
        settle_threshold=float(config.settle_threshold),
    )


def effective_instants(trace: SimTrace) -> list[tuple[int, int]]:
    """``(i_m, eta)`` for every effective step that has an effective successor.

    ``eta = i_{m+1} - i_m``; ``eta - 1`` packets were lost in between.
    """
    steps = np.flatnonzero(trace.effective)
    return [(int(a), int(b - a)) for a, b in zip(steps[:-1], steps[1:])]


def lyapunov_along_trace(trace: SimTrace, p, n_drop: int) -> list[float]:
    """``V = Gamma^T P Gamma`` at every effective step.

    ``Gamma`` stacks the states at the latest ``n_drop`` effective steps,
    newest first; missing history is padded with the initial state.
    """
    p = np.asarray(p, dtype=float)
    n = trace.x.shape[1]
    if p.shape != (n * n_drop, n * n_drop):
        raise ValueError(f"P is {p.shape}, expected {(n * n_drop, n * n_drop)}")
    x0 = trace.x[0]
    history: list[np.ndarray] = []
    values = []
    for k in np.flatnonzero(trace.effective):
        history.insert(0, trace.x[k])
        del history[n_drop:]
        stacked = history + [x0] * (n_drop - len(history))
        values.append(lyapunov_value(p, np.concatenate(stacked)))
    return values
