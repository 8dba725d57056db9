"""Switched plant over a lossy network: discretization, closed-loop
augmentation and the LMI blocks used for verification and synthesis.

Mode indices ``l`` and drop counts ``eta`` are 1-based throughout, matching
the trace files and the CLI.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import densela
from .sdp import AffineBlock, SdpSettings, sdp_phase1

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class ContinuousMode:
    a: np.ndarray
    b: np.ndarray
    label: str = ""

    def __post_init__(self):
        a = densela.as_matrix(self.a, "a")
        b = densela.as_matrix(self.b, "b")
        if a.shape[0] != a.shape[1]:
            raise densela.DimensionError(f"a must be square, got {a.shape}")
        if b.shape[0] != a.shape[0]:
            raise densela.DimensionError(f"b has {b.shape[0]} rows, a has {a.shape[0]}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class PlantMode:
    f: np.ndarray
    g: np.ndarray
    label: str = ""

    def __post_init__(self):
        f = densela.as_matrix(self.f, "f")
        g = densela.as_matrix(self.g, "g")
        if f.shape[0] != f.shape[1]:
            raise densela.DimensionError(f"f must be square, got {f.shape}")
        if g.shape[0] != f.shape[0]:
            raise densela.DimensionError(f"g has {g.shape[0]} rows, f has {f.shape[0]}")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return self.f.shape[0]

    @property
    def m(self) -> int:
        return self.g.shape[1]


@dataclass(frozen=True)
class SwitchedPlant:
    modes: tuple[PlantMode, ...]
    sample_period: float
    n_drop: int

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ValueError("a switched plant needs at least one mode")
        if self.n_drop < 1:
            raise ValueError("n_drop must be at least 1")
        if not self.sample_period > 0:
            raise ValueError("sample_period must be positive")
        shapes = {(md.n, md.m) for md in modes}
        if len(shapes) != 1:
            raise densela.DimensionError(f"modes disagree on (n, m): {sorted(shapes)}")
        object.__setattr__(self, "modes", modes)

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def m(self) -> int:
        return self.modes[0].m

    @property
    def r(self) -> int:
        return len(self.modes)

    @property
    def order(self) -> int:
        """Size of the augmented state, n * n_drop."""
        return self.n * self.n_drop


@dataclass(frozen=True)
class GainSchedule:
    gains: tuple[np.ndarray, ...]

    def __post_init__(self):
        gains = tuple(densela.as_matrix(k, "gain") for k in self.gains)
        if not gains:
            raise ValueError("a gain schedule needs at least one gain")
        if len({k.shape for k in gains}) != 1:
            raise densela.DimensionError("gains must share one shape")
        object.__setattr__(self, "gains", gains)

    @property
    def n_drop(self) -> int:
        return len(self.gains)

    def __getitem__(self, q: int) -> np.ndarray:
        """Gain K_q, 1-based."""
        if not 1 <= q <= self.n_drop:
            raise IndexError(f"gain index {q} outside 1..{self.n_drop}")
        return self.gains[q - 1]

    def check_plant(self, plant: SwitchedPlant) -> None:
        if self.n_drop != plant.n_drop:
            raise densela.DimensionError(f"{self.n_drop} gains for n_drop={plant.n_drop}")
        if self.gains[0].shape != (plant.m, plant.n):
            raise densela.DimensionError(
                f"gains are {self.gains[0].shape}, plant needs {(plant.m, plant.n)}"
            )

    @classmethod
    def zeros(cls, plant: SwitchedPlant) -> "GainSchedule":
        return cls(tuple(np.zeros((plant.m, plant.n)) for _ in range(plant.n_drop)))


@dataclass(frozen=True)
class AugmentedClosedLoop:
    phi: dict[tuple[int, int], np.ndarray]

    def __getitem__(self, key: tuple[int, int]) -> np.ndarray:
        return self.phi[key]

    def __iter__(self):
        return iter(sorted(self.phi))

    def __len__(self) -> int:
        return len(self.phi)


@dataclass
class StabilityCertificate:
    """Outcome of the common-Lyapunov search for fixed gains.

    ``p`` is the best matrix found; it certifies stability only when
    ``valid`` is true.
    """

    p: np.ndarray
    worst_margin: float
    per_pair_stable: dict[tuple[int, int], bool]
    phase1_margin: float
    epsilon: float = DEFAULT_EPSILON
    p_definite: bool = False

    @property
    def valid(self) -> bool:
        return self.phase1_margin > 0 and self.p_definite and self.worst_margin < 0


def discretize(mode: ContinuousMode, h: float) -> PlantMode:
    """Zero-order-hold discretization through one augmented exponential.

    ``expm([[A, B], [0, 0]] * h)`` has ``F = e^{Ah}`` and
    ``G = int_0^h e^{As} ds B`` as its top blocks.
    """
    if not h > 0:
        raise ValueError("sampling period must be positive")
    n, m = mode.b.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = mode.a
    aug[:n, n:] = mode.b
    e = densela.matexp(aug * h)
    return PlantMode(f=e[:n, :n], g=e[:n, n:], label=mode.label)


def closed_loop_top_block(mode: PlantMode, gains: GainSchedule, eta: int) -> np.ndarray:
    """State map from one effective instant to the next after ``eta`` steps.

    Returns ``F^eta + sum_{t=0}^{eta-1} F^t G K_{eta-t}``: the buffer applies
    K_1 x first, then K_2 x, ... while the plant keeps evolving, so the input
    issued at step ``j`` (gain K_{j+1}) is propagated by ``F^{eta-1-j}``.
    """
    if not 1 <= eta <= gains.n_drop:
        raise ValueError(f"eta={eta} outside 1..{gains.n_drop}")
    f, g = mode.f, mode.g
    top = np.linalg.matrix_power(f, eta)
    f_pow = np.eye(mode.n)
    for t in range(eta):
        top = top + f_pow @ g @ gains[eta - t]
        f_pow = f_pow @ f
    return top


def _shift(n: int, n_drop: int) -> np.ndarray:
    """Block sub-diagonal identity of the augmented map."""
    size = n * n_drop
    s = np.zeros((size, size))
    for k in range(1, n_drop):
        s[k * n : (k + 1) * n, (k - 1) * n : k * n] = np.eye(n)
    return s


def build_phi(plant: SwitchedPlant, gains: GainSchedule) -> AugmentedClosedLoop:
    gains.check_plant(plant)
    n = plant.n
    base = _shift(n, plant.n_drop)
    phis = {}
    for l, mode in enumerate(plant.modes, start=1):
        for eta in range(1, plant.n_drop + 1):
            phi = base.copy()
            phi[:n, :n] = closed_loop_top_block(mode, gains, eta)
            phis[(l, eta)] = phi
    return AugmentedClosedLoop(phis)


def sym_basis(size: int) -> np.ndarray:
    """Basis of symmetric matrices, one per upper-triangle entry (row-major).

    Coordinates in this basis are the matrix entries themselves.
    """
    rows, cols = np.triu_indices(size)
    basis = np.zeros((rows.size, size, size))
    k = np.arange(rows.size)
    basis[k, rows, cols] = 1.0
    basis[k, cols, rows] = 1.0
    return basis


def sym_to_vec(p: np.ndarray) -> np.ndarray:
    return p[np.triu_indices(p.shape[0])]


def vec_to_sym(v: np.ndarray, size: int) -> np.ndarray:
    p = np.zeros((size, size))
    p[np.triu_indices(size)] = v
    return p + np.triu(p, 1).T


def lyapunov_value(p, gamma) -> float:
    p = densela.as_matrix(p, "p")
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if p.shape != (gamma.size, gamma.size):
        raise densela.DimensionError(f"P is {p.shape}, state has length {gamma.size}")
    return float(gamma @ p @ gamma)


def _max_eig(a: np.ndarray) -> float:
    return float(densela.eig_sym(0.5 * (a + a.T)).eigenvalues[-1])


def verify_theorem1(
    plant: SwitchedPlant,
    gains: GainSchedule,
    epsilon: float = DEFAULT_EPSILON,
    settings: SdpSettings | None = None,
) -> StabilityCertificate:
    """Search a common P with ``Phi^T P Phi - P <= -eps*I`` for every (mode, eta).

    The search is a phase-1 margin maximisation over the entries of P. The
    returned margins are recomputed from P independently of the solver.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    closed = build_phi(plant, gains)
    size = plant.order
    basis = sym_basis(size)
    eye = np.eye(size)
    blocks = [AffineBlock(-epsilon * eye, basis)]
    for key in closed:
        phi = closed[key]
        coeffs = basis - np.einsum("ji,kjl,lm->kim", phi, basis, phi)
        blocks.append(AffineBlock(-epsilon * eye, 0.5 * (coeffs + coeffs.transpose(0, 2, 1))))
    z, margin = sdp_phase1(blocks, settings)
    p = vec_to_sym(z, size)
    return certify(plant, gains, p, margin, epsilon, closed)


def certify(
    plant: SwitchedPlant,
    gains: GainSchedule,
    p: np.ndarray,
    phase1_margin: float = np.inf,
    epsilon: float = DEFAULT_EPSILON,
    closed: AugmentedClosedLoop | None = None,
) -> StabilityCertificate:
    """Recompute Lyapunov margins and per-pair Schur flags for a given P."""
    closed = closed or build_phi(plant, gains)
    p = 0.5 * (p + p.T)
    try:
        densela.cholesky(p)
        definite = True
    except densela.LinAlgError:
        definite = False
    worst = max(_max_eig(closed[k].T @ p @ closed[k] - p) for k in closed)
    stable = {k: densela.is_schur_stable(closed[k]) for k in closed}
    return StabilityCertificate(
        p=p,
        worst_margin=worst,
        per_pair_stable=stable,
        phase1_margin=float(phase1_margin),
        epsilon=epsilon,
        p_definite=definite,
    )


@dataclass(frozen=True)
class SynthesisLayout:
    """Decision vector layout ``z = (triu(P), triu(Q), K_1, ..., K_N)``."""

    n: int
    m: int
    n_drop: int

    @property
    def order(self) -> int:
        return self.n * self.n_drop

    @property
    def n_sym(self) -> int:
        return self.order * (self.order + 1) // 2

    @property
    def n_gain(self) -> int:
        return self.n_drop * self.m * self.n

    @property
    def dimension(self) -> int:
        return 2 * self.n_sym + self.n_gain

    @property
    def p_slice(self) -> slice:
        return slice(0, self.n_sym)

    @property
    def q_slice(self) -> slice:
        return slice(self.n_sym, 2 * self.n_sym)

    @property
    def k_slice(self) -> slice:
        return slice(2 * self.n_sym, self.dimension)

    def unpack(self, z) -> tuple[np.ndarray, np.ndarray, GainSchedule]:
        z = np.asarray(z, dtype=float)
        p = vec_to_sym(z[self.p_slice], self.order)
        q = vec_to_sym(z[self.q_slice], self.order)
        k = z[self.k_slice].reshape(self.n_drop, self.m, self.n)
        return p, q, GainSchedule(tuple(k))

    def pack(self, p, q, gains: GainSchedule) -> np.ndarray:
        k = np.concatenate([np.asarray(g).reshape(-1) for g in gains.gains])
        return np.concatenate([sym_to_vec(np.asarray(p)), sym_to_vec(np.asarray(q)), k])

    def trace_objective(self, p_k: np.ndarray, q_k: np.ndarray) -> np.ndarray:
        """Coefficients c with ``c @ z = trace(P Q_k) + trace(P_k Q)``."""
        c = np.zeros(self.dimension)
        rows, cols = np.triu_indices(self.order)
        weight = np.where(rows == cols, 1.0, 2.0)
        c[self.p_slice] = weight * q_k[rows, cols]
        c[self.q_slice] = weight * p_k[rows, cols]
        return c


@dataclass
class SynthesisBlocks:
    blocks: list[AffineBlock]
    layout: SynthesisLayout
    pairs: list[tuple[int, int]] = field(default_factory=list)


def assemble_synthesis_blocks(plant: SwitchedPlant, epsilon: float = DEFAULT_EPSILON) -> SynthesisBlocks:
    """LMI blocks affine in ``z = (P, Q, K)``.

    Per (mode, eta): ``[[P, -Phi^T], [-Phi, Q]] - eps*I >= 0``; then
    ``[[P, I], [I, Q]] >= 0``, ``P - eps*I >= 0`` and ``Q - eps*I >= 0``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    n, m, nd = plant.n, plant.m, plant.n_drop
    lay = SynthesisLayout(n, m, nd)
    size = lay.order
    d = lay.dimension
    basis = sym_basis(size)
    eye = np.eye(size)

    def two_by_two(top_left, off, bottom_right):
        out = np.zeros(top_left.shape[:-2] + (2 * size, 2 * size))
        out[..., :size, :size] = top_left
        out[..., :size, size:] = np.swapaxes(off, -1, -2)
        out[..., size:, :size] = off
        out[..., size:, size:] = bottom_right
        return out

    zero_sym = np.zeros_like(basis)
    # P and Q coefficients are the same in every coupled block
    pq_coeffs = np.concatenate(
        [two_by_two(basis, zero_sym, zero_sym), two_by_two(zero_sym, zero_sym, basis)]
    )

    blocks: list[AffineBlock] = []
    pairs = []
    zero_gains = GainSchedule.zeros(plant)
    shift = _shift(n, nd)
    for l, mode in enumerate(plant.modes, start=1):
        powers = [np.linalg.matrix_power(mode.f, t) for t in range(nd + 1)]
        for eta in range(1, nd + 1):
            phi0 = shift.copy()
            phi0[:n, :n] = closed_loop_top_block(mode, zero_gains, eta)
            f0 = two_by_two(np.zeros((size, size)), -phi0, np.zeros((size, size))) - epsilon * np.eye(2 * size)
            # d Phi / d K_q[a, b] = F^{eta-q} G[:, a] e_b^T in the top-left block, q <= eta
            dphi = np.zeros((nd, m, n, size, size))
            for q in range(1, eta + 1):
                fg = powers[eta - q] @ mode.g
                for a in range(m):
                    for b in range(n):
                        dphi[q - 1, a, b, :n, b] = fg[:, a]
            dphi = dphi.reshape(nd * m * n, size, size)
            k_coeffs = two_by_two(np.zeros_like(dphi), -dphi, np.zeros_like(dphi))
            blocks.append(AffineBlock(f0, np.concatenate([pq_coeffs, k_coeffs])))
            pairs.append((l, eta))

    no_gain = np.zeros((lay.n_gain, 2 * size, 2 * size))
    coupling = two_by_two(np.zeros((size, size)), eye, np.zeros((size, size)))
    blocks.append(AffineBlock(coupling, np.concatenate([pq_coeffs, no_gain])))

    no_gain = np.zeros((lay.n_gain, size, size))
    blocks.append(AffineBlock(-epsilon * eye, np.concatenate([basis, zero_sym, no_gain])))
    blocks.append(AffineBlock(-epsilon * eye, np.concatenate([zero_sym, basis, no_gain])))
    assert all(b.dimension == d for b in blocks)
    return SynthesisBlocks(blocks=blocks, layout=lay, pairs=pairs)


def stabilizability_margin(
    mode: PlantMode, epsilon: float = DEFAULT_EPSILON, settings: SdpSettings | None = None
) -> float:
    """Phase-1 margin of the one-step state-feedback LMI for a single mode.

    Positive iff some ``K`` makes ``F + G K`` Schur stable (with
    ``X > 0`` and ``Y = K X``, ``[[X, (FX + GY)^T], [FX + GY, X]] > 0``).
    Every augmented map with one step between effective instants contains
    ``F + G K_1`` as its only non-nilpotent part, so a mode failing this
    test cannot be stabilized by any gain schedule.
    """
    n, m = mode.n, mode.m
    basis = sym_basis(n)
    ks = np.zeros((m * n, m, n))
    ks[np.arange(m * n), np.repeat(np.arange(m), n), np.tile(np.arange(n), m)] = 1.0
    # closed-loop term F X + G Y, affine in (X, Y)
    cl = np.concatenate([mode.f @ basis, mode.g @ ks])
    top = np.concatenate([basis, np.zeros((m * n, n, n))])
    coeffs = np.zeros((len(cl), 2 * n, 2 * n))
    coeffs[:, :n, :n] = top
    coeffs[:, n:, n:] = top
    coeffs[:, n:, :n] = cl
    coeffs[:, :n, n:] = cl.transpose(0, 2, 1)
    blocks = [
        AffineBlock(-epsilon * np.eye(2 * n), coeffs),
        AffineBlock(-epsilon * np.eye(n), top),
    ]
    _, margin = sdp_phase1(blocks, settings)
    return margin
