"""Regularized inversion of the delay forward model.

Three formulations, all sharing the quadratic data-fidelity term
1/2 ||y - A x||^2:

* Sp     — + lambda ||x||_1, solved by FISTA with restart-on-objective-increase.
* SpTV   — + lambda ||z1||_1 + gamma ||z2||_1 with z1 = x, z2 = Dx, solved by
           ADMM; the x-subproblem (A^T A + rho I + rho D^T D) x = rhs goes
           through conjugate gradient.
* SpReD  — + lambda ||z||_1 + mu/2 x^T (x - f(x)) for a denoiser f, solved by
           ADMM whose x-update is a fixed-point loop of linear solves with f
           frozen at the previous inner iterate.

D is the 3D forward-difference operator over (lateral, axial, temporal) axes
with a replicated boundary (last difference zero), so constant cubes have
exactly zero TV.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, InvalidInputError, SolverDivergenceError
from .geometry import AcquisitionGeometry
from .metrics import PowerMap
from .operators import DelayOperator, RfFrame, SourceCube, estimate_operator_norm


@dataclass
class SolverConfig:
    """Hyperparameters shared by the three solvers.

    ``lam``/``gamma``/``mu`` are the absolute regularization weights; the CLI
    resolves them from fractions of ||A^T y||_inf before calling a solver.
    """

    lam: float = 0.0
    gamma: float = 0.0
    mu: float = 0.0
    rho: float = 1.0
    max_iterations: int = 300
    tolerance: float = 1e-5
    inner_cg_iterations: int = 20
    inner_cg_tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if min(self.lam, self.gamma, self.mu) < 0:
            raise ConfigError("solver", "regularization weights must be >= 0")
        if self.rho <= 0:
            raise ConfigError("solver.rho", "must be > 0")
        if self.max_iterations < 1 or self.inner_cg_iterations < 1:
            raise ConfigError("solver", "iteration counts must be >= 1")
        if self.tolerance <= 0 or self.inner_cg_tolerance <= 0:
            raise ConfigError("solver", "tolerances must be > 0")


@dataclass
class SolveReport:
    """Result of one solve: estimate, per-iteration objective, diagnostics."""

    estimate: SourceCube
    objective_trace: list[float]
    iterations: int
    converged: bool
    wall_time: float
    extras: dict = field(default_factory=dict)


class Denoiser:
    """Shape-preserving denoiser with a descriptive identifier."""

    def __init__(self, fn: Callable[[NDArray], NDArray], name: str):
        self._fn = fn
        self.name = name

    def __call__(self, x: NDArray) -> NDArray:
        out = self._fn(x)
        if out.shape != x.shape:
            raise InvalidInputError(f"denoiser {self.name} changed the tensor shape")
        return out


def default_denoiser(x: SourceCube, strength: float) -> SourceCube:
    """Separable 3D Gaussian smoothing, sigma = strength per axis, 3-sigma cutoff."""
    if strength <= 0:
        raise InvalidInputError("strength must be > 0")
    return SourceCube(_gaussian3d(x.data, strength))


def _gaussian3d(x: NDArray, strength: float) -> NDArray:
    # Replicate padding keeps constants exact; truncated kernel is renormalized.
    return gaussian_filter(x, sigma=strength, mode="nearest", truncate=3.0)


def gaussian_denoiser(strength: float) -> Denoiser:
    if strength <= 0:
        raise InvalidInputError("strength must be > 0")
    return Denoiser(lambda x: _gaussian3d(x, strength), f"gaussian(sigma={strength:g})")


def identity_denoiser() -> Denoiser:
    return Denoiser(lambda x: x, "identity")


def soft_threshold(v: NDArray, tau: float) -> NDArray:
    """Elementwise sign(v) * max(|v| - tau, 0)."""
    if tau < 0:
        raise InvalidInputError("tau must be >= 0")
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def apply_diff(x: NDArray) -> NDArray:
    """Stacked forward differences along the three cube axes, shape (3, ...).

    The last slice of each direction is zero (replicated boundary).
    """
    d = np.zeros((3, *x.shape))
    d[0, :-1, :, :] = x[1:, :, :] - x[:-1, :, :]
    d[1, :, :-1, :] = x[:, 1:, :] - x[:, :-1, :]
    d[2, :, :, :-1] = x[:, :, 1:] - x[:, :, :-1]
    return d


def apply_diff_adjoint(d: NDArray) -> NDArray:
    """Adjoint of apply_diff (negative divergence with matching boundary rule)."""
    if d.ndim != 4 or d.shape[0] != 3:
        raise InvalidInputError("expected stacked differences of shape (3, Nx, Nz, Nt)")
    out = np.zeros(d.shape[1:])
    # Each column i receives +d[i-1] (from row i-1) and -d[i] (row i, absent at the end).
    out[1:, :, :] += d[0, :-1, :, :]
    out[:-1, :, :] -= d[0, :-1, :, :]
    out[:, 1:, :] += d[1, :, :-1, :]
    out[:, :-1, :] -= d[1, :, :-1, :]
    out[:, :, 1:] += d[2, :, :, :-1]
    out[:, :, :-1] -= d[2, :, :, :-1]
    return out


def _l1(x: NDArray) -> float:
    return float(np.abs(x).sum())


def _datafit(op: DelayOperator, x: NDArray, y: NDArray) -> float:
    r = op.forward_array(x) - y
    return 0.5 * float(np.sum(r * r))


def fista_solve(
    op: DelayOperator, y: RfFrame, cfg: SolverConfig, lipschitz: float | None = None
) -> SolveReport:
    """Minimize 1/2 ||y - Ax||^2 + lam ||x||_1 by FISTA with adaptive restart.

    Momentum is reset whenever the objective would increase, which makes the
    recorded trace non-increasing. The step is 1/L with L the power-iteration
    estimate of ||A||^2 inflated by 1%, since power iteration approaches the
    true norm from below.
    """
    t0 = time.perf_counter()
    if lipschitz is None:
        lipschitz = estimate_operator_norm(op, iterations=200, seed=cfg.seed)
    if lipschitz <= 0:
        raise ConfigError("solver.lipschitz", "operator norm estimate must be > 0")
    step = 1.0 / (lipschitz * 1.01)
    yv = np.zeros(op.cube_shape)
    x = yv.copy()
    yd = y.data
    t = 1.0
    trace: list[float] = []
    restarts = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        grad = op.adjoint_array(op.forward_array(yv) - yd)
        x_new = soft_threshold(yv - step * grad, step * cfg.lam)
        f_new = _datafit(op, x_new, yd) + cfg.lam * _l1(x_new)
        if trace and f_new > trace[-1]:
            # restart: plain proximal step from the last iterate
            restarts += 1
            t = 1.0
            grad = op.adjoint_array(op.forward_array(x) - yd)
            x_new = soft_threshold(x - step * grad, step * cfg.lam)
            f_new = _datafit(op, x_new, yd) + cfg.lam * _l1(x_new)
        trace.append(f_new)
        denom = max(float(np.linalg.norm(x)), 1e-30)
        rel = float(np.linalg.norm(x_new - x)) / denom
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        yv = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x = x_new
        t = t_new
        if rel < cfg.tolerance:
            converged = True
            break
    return SolveReport(
        estimate=SourceCube(x),
        objective_trace=trace,
        iterations=it,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        extras={"restarts": restarts, "lipschitz": lipschitz},
    )


def _conjugate_gradient(matvec, rhs: NDArray, x0: NDArray, iters: int, tol: float) -> NDArray:
    """Plain CG on an SPD operator over ndarrays; raises on non-finite iterates."""
    x = x0.copy()
    r = rhs - matvec(x)
    p = r.copy()
    rs = float(np.vdot(r, r).real)
    rhs_norm = max(float(np.linalg.norm(rhs)), 1e-30)
    for k in range(iters):
        if np.sqrt(rs) / rhs_norm < tol:
            break
        ap = matvec(p)
        denom = float(np.vdot(p, ap).real)
        if denom <= 0 or not np.isfinite(denom):
            raise SolverDivergenceError("CG breakdown (non-SPD or non-finite)", iteration=k)
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.vdot(r, r).real)
        if not np.isfinite(rs_new):
            raise SolverDivergenceError("CG produced non-finite residual", iteration=k)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def admm_sptv_solve(op: DelayOperator, y: RfFrame, cfg: SolverConfig) -> SolveReport:
    """ADMM for 1/2||y - Ax||^2 + lam||z1||_1 + gamma||z2||_1, z1 = x, z2 = Dx."""
    t0 = time.perf_counter()
    yd = y.data
    aty = op.adjoint_array(yd)
    shape = op.cube_shape
    x = np.zeros(shape)
    z1 = np.zeros(shape)
    z2 = np.zeros((3, *shape))
    u1 = np.zeros(shape)
    u2 = np.zeros((3, *shape))
    rho = cfg.rho

    def matvec(v):
        return (
            op.adjoint_array(op.forward_array(v))
            + rho * v
            + rho * apply_diff_adjoint(apply_diff(v))
        )

    trace: list[float] = []
    primal_res: list[float] = []
    dual_res: list[float] = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        rhs = aty + rho * (z1 - u1) + rho * apply_diff_adjoint(z2 - u2)
        x_prev = x
        x = _conjugate_gradient(matvec, rhs, x, cfg.inner_cg_iterations, cfg.inner_cg_tolerance)
        dx = apply_diff(x)
        z1_prev, z2_prev = z1, z2
        z1 = soft_threshold(x + u1, cfg.lam / rho)
        z2 = soft_threshold(dx + u2, cfg.gamma / rho)
        u1 = u1 + x - z1
        u2 = u2 + dx - z2
        r_norm = np.sqrt(np.sum((x - z1) ** 2) + np.sum((dx - z2) ** 2))
        s_norm = rho * np.sqrt(
            np.sum((z1 - z1_prev) ** 2)
            + np.sum(apply_diff_adjoint(z2 - z2_prev) ** 2)
        )
        scale = max(float(np.linalg.norm(x)), 1e-30)
        primal_res.append(float(r_norm) / scale)
        dual_res.append(float(s_norm) / scale)
        trace.append(_datafit(op, x, yd) + cfg.lam * _l1(x) + cfg.gamma * _l1(dx))
        rel = float(np.linalg.norm(x - x_prev)) / max(float(np.linalg.norm(x_prev)), 1e-30)
        if rel < cfg.tolerance and it > 1:
            converged = True
            break
    return SolveReport(
        estimate=SourceCube(x),
        objective_trace=trace,
        iterations=it,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        extras={"primal_residuals": primal_res, "dual_residuals": dual_res},
    )


def admm_spred_solve(
    op: DelayOperator, y: RfFrame, cfg: SolverConfig, denoiser: Denoiser
) -> SolveReport:
    """ADMM for 1/2||y - Ax||^2 + lam||z||_1 + mu/2 x^T (x - f(x)), z = x.

    The x-update is a fixed-point loop: with the denoiser frozen at the
    previous inner iterate, each inner step solves
    (A^T A + (mu + rho) I) x = A^T y + mu f(x_prev) + rho (z - u) by CG.
    """
    t0 = time.perf_counter()
    yd = y.data
    aty = op.adjoint_array(yd)
    shape = op.cube_shape
    x = np.zeros(shape)
    z = np.zeros(shape)
    u = np.zeros(shape)
    rho = cfg.rho
    mu = cfg.mu

    def matvec(v):
        return op.adjoint_array(op.forward_array(v)) + (mu + rho) * v

    trace: list[float] = []
    primal_res: list[float] = []
    dual_res: list[float] = []
    stalled = False
    converged = False
    max_inner = 10
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        x_prev_outer = x
        x_inner = x
        last_change = np.inf
        no_progress = 0
        for _ in range(max_inner):
            fx = denoiser(x_inner) if mu > 0 else x_inner
            rhs = aty + mu * fx + rho * (z - u)
            x_next = _conjugate_gradient(
                matvec, rhs, x_inner, cfg.inner_cg_iterations, cfg.inner_cg_tolerance
            )
            change = float(np.linalg.norm(x_next - x_inner)) / max(
                float(np.linalg.norm(x_inner)), 1e-30
            )
            x_inner = x_next
            if change < cfg.inner_cg_tolerance:
                break
            if change >= last_change:
                no_progress += 1
                if no_progress >= 10:
                    stalled = True
                    break
            else:
                no_progress = 0
            last_change = change
        x = x_inner
        z_prev = z
        z = soft_threshold(x + u, cfg.lam / rho)
        u = u + x - z
        scale = max(float(np.linalg.norm(x)), 1e-30)
        primal_res.append(float(np.linalg.norm(x - z)) / scale)
        dual_res.append(rho * float(np.linalg.norm(z - z_prev)) / scale)
        red = 0.5 * float(np.vdot(x, x - denoiser(x)).real) if mu > 0 else 0.0
        trace.append(_datafit(op, x, yd) + cfg.lam * _l1(x) + mu * red)
        rel = float(np.linalg.norm(x - x_prev_outer)) / max(
            float(np.linalg.norm(x_prev_outer)), 1e-30
        )
        if rel < cfg.tolerance and it > 1:
            converged = True
            break
    return SolveReport(
        estimate=SourceCube(x),
        objective_trace=trace,
        iterations=it,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        extras={
            "primal_residuals": primal_res,
            "dual_residuals": dual_res,
            "fixed_point_stalled": stalled,
            "denoiser": denoiser.name,
        },
    )


def power_map(x: SourceCube, geom: AcquisitionGeometry | None = None) -> PowerMap:
    """Temporally integrated squared amplitude: X[i, j] = sum_k x[i, j, k]^2."""
    data = np.sum(x.data**2, axis=2)
    if geom is not None:
        return PowerMap(data, origin=geom.grid_origin, pitch=geom.grid_pitch)
    return PowerMap(data)
