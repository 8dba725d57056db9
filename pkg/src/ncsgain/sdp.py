"""Small dense semidefinite programming solver.

Solves::

    minimize    c @ z
    subject to  F0_j + sum_i z_i * F_ij  >= 0   (PSD) for every block j

with a primal-dual interior-point method (HKM search direction,
Mehrotra predictor-corrector). The iterates ``z`` stay strictly feasible:
they start from a phase-1 point that maximises a uniform margin ``t`` with
``F_j(z) >= t*I`` (capped at ``initial_margin`` so it stays bounded) and
the slack ``S(z)`` is always recomputed from ``z``. The multiplier ``X``
starts infeasible and is driven onto ``<F_i, X> = c_i``.
Everything is deterministic; there is no randomisation.
"""
from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import densela


class SdpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class AffineBlock:
    """One matrix inequality ``f0 + sum_i z_i * coeffs[i] >= 0``."""

    f0: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.f0 = densela.as_matrix(self.f0, "f0")
        s = self.f0.shape[0]
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.size == 0:
            coeffs = coeffs.reshape(len(coeffs), s, s)
        if coeffs.ndim != 3 or coeffs.shape[1:] != (s, s):
            raise densela.DimensionError(
                f"coefficients must have shape (d, {s}, {s}), got {coeffs.shape}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("block coefficients have non-finite entries")
        densela.check_symmetric(self.f0)
        for c in coeffs:
            densela.check_symmetric(c)
        self.coeffs = coeffs

    @property
    def size(self) -> int:
        return self.f0.shape[0]

    @property
    def dimension(self) -> int:
        return self.coeffs.shape[0]

    def value(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dimension,):
            raise densela.DimensionError(f"z has shape {z.shape}, block expects ({self.dimension},)")
        return self.f0 + np.tensordot(z, self.coeffs, axes=1)


@dataclass
class SdpProblem:
    objective: np.ndarray
    blocks: list[AffineBlock]

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        if not self.blocks:
            raise ValueError("an SDP needs at least one block")
        for b in self.blocks:
            if b.dimension != self.dimension:
                raise densela.DimensionError(
                    f"block has {b.dimension} coefficients, problem dimension is {self.dimension}"
                )

    @property
    def dimension(self) -> int:
        return self.objective.shape[0]


@dataclass
class SdpSettings:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-7
    max_iterations: int = 200
    initial_margin: float = 1.0
    # box |z_i| <= variable_bound keeps phase 1 bounded when the margin cap
    # is reached on an unbounded face
    variable_bound: float = 1e4

    def __post_init__(self):
        for name in ("feas_tol", "gap_tol", "initial_margin", "variable_bound"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class SdpSolution:
    status: SdpStatus
    z: np.ndarray
    objective_value: float
    min_block_margin: float
    iterations: int
    gap: float = math.inf
    # objective and relative multiplier residual at every interior-point iterate
    history: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in (SdpStatus.OPTIMAL, SdpStatus.FEASIBLE)


def block_margin(blocks: Sequence[AffineBlock], z) -> float:
    """Smallest eigenvalue over all blocks evaluated at ``z``."""
    return min(densela.min_eig(b.value(z)) for b in blocks)


class _Cone:
    """Constraint data ``S(z) = f0 + sum_i z_i F_i``.

    PSD blocks are grouped by size and handled as batches; scalar rows
    ``h - g @ z >= 0`` form a separate linear part.
    """

    def __init__(self, f0s, coeffs, g=None, h=None):
        groups: dict[int, list[int]] = defaultdict(list)
        for k, f in enumerate(f0s):
            if f.shape[0]:
                groups[f.shape[0]].append(k)
        self.groups = [
            (np.stack([f0s[k] for k in idx]), np.stack([coeffs[k] for k in idx]))
            for _, idx in sorted(groups.items())
        ]
        d = coeffs[0].shape[0] if coeffs else (g.shape[1] if g is not None else 0)
        self.lin_f0 = np.zeros(0) if h is None else np.asarray(h, dtype=float)
        self.lin_coeffs = np.zeros((d, 0)) if g is None else -np.asarray(g, dtype=float).T
        self.order = sum(f.shape[0] * f.shape[1] for f, _ in self.groups) + self.lin_f0.size

    def slack(self, z):
        mats = [f0 + np.einsum("i,bijk->bjk", z, c) for f0, c in self.groups]
        return mats, self.lin_f0 + z @ self.lin_coeffs

    def direction(self, z_step):
        mats = [np.einsum("i,bijk->bjk", z_step, c) for _, c in self.groups]
        return mats, z_step @ self.lin_coeffs

    def adjoint(self, mats, vec):
        """``<F_i, Y>`` for every i."""
        out = self.lin_coeffs @ vec
        for m, (_, c) in zip(mats, self.groups):
            out = out + np.einsum("bijk,bkj->i", c, m)
        return out

    def initial_multiplier(self, c):
        scale = max(10.0, math.sqrt(self.order))
        for _, coeffs in self.groups:
            norms = np.sqrt(np.einsum("bijk,bijk->i", coeffs, coeffs))
            scale = max(scale, float(np.max(math.sqrt(self.order) * (1 + np.abs(c)) / (1 + norms), initial=0)))
        mats = [scale * np.broadcast_to(np.eye(f.shape[1]), f.shape).copy() for f, _ in self.groups]
        return mats, np.full(self.lin_f0.size, scale)


def _inner(a_mats, a_vec, b_mats, b_vec) -> float:
    total = float(a_vec @ b_vec)
    for a, b in zip(a_mats, b_mats):
        total += float(np.einsum("bij,bji->", a, b))
    return total


def _max_step(mats, vec, d_mats, d_vec) -> float:
    """Largest alpha <= 1 keeping ``M + alpha*dM`` positive definite."""
    alpha = 1.0
    for m, dm in zip(mats, d_mats):
        low = np.linalg.cholesky(m)
        inv = np.linalg.inv(low)
        w = np.linalg.eigvalsh(inv @ dm @ np.swapaxes(inv, 1, 2))
        lo = float(np.min(w))
        if lo < 0:
            alpha = min(alpha, -1.0 / lo)
    if vec.size:
        neg = d_vec < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-vec[neg] / d_vec[neg])))
    return alpha


def _interior_point(cone: _Cone, c, z0, gap_tol, feas_tol, budget, stop=None, diverge_at=math.inf):
    """Primal-dual path following from a strictly feasible ``z0``.

    Returns ``(z, reason, iterations, gap, history)``; reason is one of
    ``"optimal"``, ``"stopped"``, ``"budget"``, ``"stalled"``,
    ``"singular"``, ``"unbounded"``. ``history`` holds one
    ``(objective, relative multiplier residual)`` pair per iterate.
    """
    z = z0.copy()
    x_mats, x_vec = cone.initial_multiplier(c)
    n = max(cone.order, 1)
    c_norm = 1.0 + float(np.linalg.norm(c))
    history: list[tuple[float, float]] = []
    gap = math.inf
    for its in range(budget + 1):
        s_mats, s_vec = cone.slack(z)
        residual = c - cone.adjoint(x_mats, x_vec)
        history.append((float(c @ z), float(np.linalg.norm(residual)) / c_norm))
        if stop is not None and stop(z):
            return z, "stopped", its, gap, history
        mu = _inner(x_mats, x_vec, s_mats, s_vec) / n
        gap = max(mu * n, abs(float(c @ z) + _inner(x_mats, x_vec, [f for f, _ in cone.groups], cone.lin_f0)))
        if (
            float(np.linalg.norm(residual)) <= feas_tol * c_norm
            and gap <= gap_tol * (1.0 + abs(float(c @ z)))
        ):
            return z, "optimal", its, gap, history
        if its == budget:
            return z, "budget", its, gap, history

        s_inv = [np.linalg.inv(s) for s in s_mats]
        s_inv = [0.5 * (a + np.swapaxes(a, 1, 2)) for a in s_inv]
        # Schur complement M_ij = tr(F_i X F_j S^-1)
        schur = np.zeros((z.size, z.size))
        for x, si, (_, coeffs) in zip(x_mats, s_inv, cone.groups):
            t = np.matmul(np.matmul(x[:, None], coeffs), si[:, None])
            schur += np.einsum("nipq,njqp->ij", coeffs, t)
        if s_vec.size:
            schur += (cone.lin_coeffs * (x_vec / s_vec)) @ cone.lin_coeffs.T
        schur = 0.5 * (schur + schur.T)
        # Jacobi scaling keeps the pivot test meaningful when curvature spans many decades
        diag = np.sqrt(np.maximum(np.diag(schur), np.finfo(float).tiny))
        scaled = schur / np.outer(diag, diag)

        def solve(sigma_mu, corr_mats, corr_vec):
            rhs_mats = [sigma_mu * si for si in s_inv]
            rhs_vec = sigma_mu / s_vec if s_vec.size else s_vec
            if corr_mats is not None:
                rhs_mats = [r - cm @ si for r, cm, si in zip(rhs_mats, corr_mats, s_inv)]
                rhs_vec = rhs_vec - corr_vec / s_vec
            rhs = cone.adjoint(rhs_mats, rhs_vec) - c
            dz = densela.lin_solve(scaled, rhs / diag) / diag
            ds_mats, ds_vec = cone.direction(dz)
            dx_mats = []
            for x, si, ds, rm in zip(x_mats, s_inv, ds_mats, rhs_mats):
                dx = rm - x - x @ ds @ si
                dx_mats.append(0.5 * (dx + np.swapaxes(dx, 1, 2)))
            dx_vec = rhs_vec - x_vec - x_vec * ds_vec / s_vec if s_vec.size else s_vec
            return dz, dx_mats, dx_vec, ds_mats, ds_vec

        try:
            dz, dx_m, dx_v, ds_m, ds_v = solve(0.0, None, None)
            a_p = _max_step(x_mats, x_vec, dx_m, dx_v)
            a_d = _max_step(s_mats, s_vec, ds_m, ds_v)
            mu_aff = _inner(
                [x + a_p * d for x, d in zip(x_mats, dx_m)], x_vec + a_p * dx_v,
                [s + a_d * d for s, d in zip(s_mats, ds_m)], s_vec + a_d * ds_v,
            ) / n
            sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
            corr_m = [dx @ ds for dx, ds in zip(dx_m, ds_m)]
            dz, dx_m, dx_v, ds_m, ds_v = solve(sigma * mu, corr_m, dx_v * ds_v)
        except (densela.Singular, np.linalg.LinAlgError):
            return z, "singular", its, gap, history

        a_p = min(1.0, 0.95 * _max_step(x_mats, x_vec, dx_m, dx_v))
        a_d = min(1.0, 0.95 * _max_step(s_mats, s_vec, ds_m, ds_v))
        if a_p < 1e-12 and a_d < 1e-12:
            return z, "stalled", its, gap, history
        x_mats = [x + a_p * d for x, d in zip(x_mats, dx_m)]
        x_vec = x_vec + a_p * dx_v
        z_next = z + a_d * dz
        # recompute S from z; back off if rounding put it on the boundary
        while True:
            s_chk, v_chk = cone.slack(z_next)
            try:
                for s in s_chk:
                    np.linalg.cholesky(s)
                if v_chk.size and np.any(v_chk <= 0):
                    raise np.linalg.LinAlgError
                break
            except np.linalg.LinAlgError:
                a_d *= 0.5
                if a_d < 1e-14:
                    return z, "stalled", its, gap, history
                z_next = z + a_d * dz
        z = z_next
        if np.max(np.abs(z), initial=0.0) > diverge_at:
            return z, "unbounded", its + 1, gap, history


def _phase1(blocks: Sequence[AffineBlock], settings: SdpSettings, budget: int, target: float | None):
    """Margin maximisation on ``y = (z, t)``; returns ``(z, margin, iterations, reason)``."""
    d = blocks[0].dimension
    cap = settings.initial_margin
    bound = settings.variable_bound
    f0s, coeffs = [], []
    for b in blocks:
        f0s.append(b.f0)
        coeffs.append(np.concatenate([b.coeffs, -np.eye(b.size)[None]], axis=0))
    # linear rows: t <= cap, z_i <= bound, -z_i <= bound
    g = np.zeros((1 + 2 * d, d + 1))
    g[0, d] = 1.0
    g[1 : 1 + d, :d] = np.eye(d)
    g[1 + d :, :d] = -np.eye(d)
    h = np.concatenate([[cap], np.full(2 * d, bound)])
    cone = _Cone(f0s, coeffs, g, h)
    objective = np.zeros(d + 1)
    objective[d] = -1.0

    z0 = np.zeros(d)
    start_margin = min(block_margin(blocks, z0), cap)
    y0 = np.concatenate([z0, [start_margin - 1.0]])

    stop = None
    if target is not None:
        stop = lambda y: y[d] >= target  # noqa: E731

    y, reason, its, _, _ = _interior_point(
        cone, objective, y0, settings.gap_tol, settings.feas_tol, budget, stop=stop
    )
    z = y[:d]
    margin = min(cap, block_margin(blocks, z))
    return z, margin, its, reason


def sdp_phase1(blocks: Sequence[AffineBlock], settings: SdpSettings | None = None):
    """Maximise the uniform margin of ``blocks``.

    Returns ``(z, margin)`` with ``margin = min(initial_margin, smallest block
    eigenvalue at z)``. A positive margin certifies strict feasibility.
    """
    settings = settings or SdpSettings()
    blocks = list(blocks)
    if not blocks:
        raise ValueError("phase 1 needs at least one block")
    dims = {b.dimension for b in blocks}
    if len(dims) != 1:
        raise densela.DimensionError(f"blocks disagree on dimension: {sorted(dims)}")
    z, margin, _, _ = _phase1(blocks, settings, settings.max_iterations, None)
    return z, margin


def sdp_solve(problem: SdpProblem, settings: SdpSettings | None = None) -> SdpSolution:
    settings = settings or SdpSettings()
    c = problem.objective
    blocks = problem.blocks

    def finish(status, z, its, gap=math.inf, history=None, message="", residuals=None):
        return SdpSolution(
            status=status,
            z=z,
            objective_value=float(c @ z),
            min_block_margin=block_margin(blocks, z),
            iterations=its,
            gap=gap,
            history=history or [],
            residuals=residuals or [],
            message=message,
        )

    # phase 1 only needs a comfortably interior point, not the best margin
    target = 0.5 * settings.initial_margin
    z, margin, its, reason = _phase1(blocks, settings, settings.max_iterations, target)
    if margin <= 0:
        if margin < -settings.feas_tol:
            if reason == "budget":
                return finish(SdpStatus.ITERATION_LIMIT, z, its, message="phase 1 budget exhausted")
            return finish(SdpStatus.INFEASIBLE, z, its, message=f"phase-1 margin {margin:.3e}")
        return finish(SdpStatus.FEASIBLE, z, its, message="no strictly feasible point")

    # variables that touch neither a block nor the objective stay where phase 1 left them
    touched = np.any([np.any(b.coeffs != 0, axis=(1, 2)) for b in blocks], axis=0)
    active = np.flatnonzero((c != 0) | touched)
    fixed = z.copy()
    fixed[active] = 0.0
    cone = _Cone([b.value(fixed) for b in blocks], [b.coeffs[active] for b in blocks])
    za, reason, its2, gap, history = _interior_point(
        cone,
        c[active],
        z[active],
        settings.gap_tol,
        settings.feas_tol,
        settings.max_iterations - its,
        diverge_at=1e3 * settings.variable_bound,
    )
    offset = float(c @ fixed)
    z = fixed.copy()
    z[active] = za
    residuals = [r for _, r in history]
    history = [v + offset for v, _ in history]
    its += its2
    if reason == "optimal":
        return finish(SdpStatus.OPTIMAL, z, its, gap, history, residuals=residuals)
    if reason in ("budget", "stalled"):
        return finish(SdpStatus.FEASIBLE, z, its, gap, history, f"{reason} before gap tolerance", residuals=residuals)
    if reason == "unbounded":
        return finish(SdpStatus.NUMERICAL_FAILURE, z, its, gap, history, "objective appears unbounded", residuals=residuals)
    return finish(SdpStatus.NUMERICAL_FAILURE, z, its, gap, history, "singular Newton system", residuals=residuals)
