"""
Static optimization: joint torques to muscle activations and forces, and force-time work.

Each frame solves

    minimize  Σ a²   subject to  Σ_m r_mj·(F_PE,m + a_m·c_m) = τ_j,  0 ≤ a ≤ 1

for the DOFs crossed by at least one muscle. The default method runs a projected Newton
iteration on the penalized objective Σ a² + W·‖A·a − τ'‖² and then restores the equalities
exactly on the free set with a minimum-norm least-squares step. When the demand cannot be met
within the activation bounds the penalized solution is kept and the frame is flagged infeasible.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from scipy.optimize import Bounds, minimize

from app.errors import InputError, SolverDiverged
from app.models import ArrayModel, DofId, JointTorqueFrame
from app.muscle_model import (
    MuscleStateFrame,
    MuscleStates,
    MusculoskeletalModel,
    force_length,
    force_velocity,
)
from app.serialization import write_csv

logger = logging.getLogger(__name__)

SolverMethod = Literal["projected-newton", "slsqp"]

PENALTY_WEIGHT = 1e6
MAX_ITERATIONS = 10_000
ARMIJO = 0.1
LINE_SEARCH_STEPS = 0.5 ** np.arange(30)
GRADIENT_TOL = 1e-10
BOUND_SLACK = 1e-9


class ActivationFrame(ArrayModel):
    t_ms: int
    names: list[str]
    activations: np.ndarray
    saturated: list[str]


class MuscleForceFrame(ArrayModel):
    """Forces (N) per muscle and the torque residual (N·m) per DOF in DofId order."""

    t_ms: int
    names: list[str]
    forces: np.ndarray
    residual: np.ndarray
    iterations: int
    infeasible: bool
    skipped_dofs: list[str] = []

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residual))


class WorkIncrementFrame(ArrayModel):
    """Force-time integral increments in N·s."""

    t_ms: int
    names: list[str]
    increments: np.ndarray


def torque_tolerance(tau: np.ndarray) -> float:
    return max(1e-6, 1e-4 * float(np.linalg.norm(tau)))


def capacities(
    norm_lengths: np.ndarray, velocities: np.ndarray, model: MusculoskeletalModel
) -> tuple[np.ndarray, np.ndarray]:
    """
    Active force capacity c = f_max·f_L·f_V and passive force F_PE per muscle.

    Args:
        norm_lengths: l/l0, shape (..., muscles).
        velocities: Shortening velocities in m/s, same shape.
        model: The loaded model; muscle order matches the last axis.

    Returns:
        (c, F_PE) in newtons, both with the input shape.
    """
    c = np.empty_like(norm_lengths, dtype=float)
    f_pe = np.empty_like(norm_lengths, dtype=float)
    for i, m in enumerate(model.muscles):
        f_l, passive = force_length(norm_lengths[..., i], m.hill)
        f_v = np.asarray(force_velocity(velocities[..., i], m.hill)) / m.hill.f_max
        c[..., i] = m.hill.f_max * f_l * f_v
        f_pe[..., i] = passive
    return c, f_pe


def crossed_dofs(model: MusculoskeletalModel) -> tuple[list[DofId], list[DofId]]:
    """DOFs crossed by at least one muscle, and the skipped remainder."""
    crossed = {d for m in model.muscles for d in m.spanned_dofs}
    active = [d for d in DofId if d in crossed]
    skipped = [d for d in DofId if d not in crossed]
    return active, skipped


def _box_qp(
    H: np.ndarray, q: np.ndarray, x0: np.ndarray, max_iterations: int
) -> tuple[np.ndarray, int]:
    """Projected Newton for min ½xᵀHx + qᵀx on the unit box; H must be positive definite."""
    x = np.clip(x0, 0.0, 1.0)
    scale = 1.0 + float(np.max(np.abs(q), initial=0.0))
    for k in range(1, max_iterations + 1):
        g = q + H @ x
        clamped = ((x <= 0.0) & (g > 0.0)) | ((x >= 1.0) & (g < 0.0))
        free = ~clamped
        if not free.any() or np.max(np.abs(g[free])) <= GRADIENT_TOL * scale:
            return x, k

        dx = np.zeros_like(x)
        dx[free] = -np.linalg.solve(H[np.ix_(free, free)], g[free])
        f_old = 0.5 * x @ H @ x + q @ x
        for step in LINE_SEARCH_STEPS:
            x_new = np.clip(x + step * dx, 0.0, 1.0)
            f_new = 0.5 * x_new @ H @ x_new + q @ x_new
            if f_old - f_new >= ARMIJO * (g @ (x - x_new)) and f_new <= f_old:
                break
        else:
            return x, k
        if np.max(np.abs(x_new - x)) == 0.0:
            return x_new, k
        x = x_new
    raise SolverDiverged(-1, max_iterations, float("nan"))


def _polish(A: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray | None:
    """Minimum-norm exact solve on the free set of x; None when it leaves the box."""
    saturated = x >= 1.0
    free = (x > 0.0) & ~saturated
    if not free.any():
        return None
    target = b - A[:, saturated].sum(axis=1)
    solution, *_ = np.linalg.lstsq(A[:, free], target, rcond=None)
    if np.any(solution < -BOUND_SLACK) or np.any(solution > 1.0 + BOUND_SLACK):
        return None
    polished = np.where(saturated, 1.0, 0.0)
    polished[free] = np.clip(solution, 0.0, 1.0)
    return polished


def _solve_projected_newton(
    A: np.ndarray,
    b: np.ndarray,
    x0: np.ndarray,
    tol: float,
    penalty_weight: float,
    max_iterations: int,
) -> tuple[np.ndarray, int]:
    n = A.shape[1]
    H = 2.0 * (np.eye(n) + penalty_weight * A.T @ A)
    q = -2.0 * penalty_weight * A.T @ b
    x, iterations = _box_qp(H, q, x0, max_iterations)
    miss = np.linalg.norm(A @ x - b)
    if miss > 0.0:
        polished = _polish(A, b, x)
        if polished is not None and np.linalg.norm(A @ polished - b) <= max(tol, miss):
            x = polished
    return x, iterations


def _solve_slsqp(
    A: np.ndarray,
    b: np.ndarray,
    x0: np.ndarray,
    tol: float,
    penalty_weight: float,
    max_iterations: int,
) -> tuple[np.ndarray, int]:
    n = A.shape[1]
    out = minimize(
        lambda a: a @ a,
        x0=np.clip(x0, 0.0, 1.0),
        jac=lambda a: 2.0 * a,
        method="SLSQP",
        bounds=Bounds(np.zeros(n), np.ones(n)),
        constraints={"type": "eq", "fun": lambda a: A @ a - b, "jac": lambda a: A},
        options={"maxiter": max_iterations, "ftol": 1e-12},
    )
    x = np.clip(out.x, 0.0, 1.0)
    if out.success and np.linalg.norm(A @ x - b) <= tol:
        return x, int(out.nit)
    # Infeasible demand: fall back to the penalized relaxation.
    x, iterations = _solve_projected_newton(A, b, x, tol, penalty_weight, max_iterations)
    return x, int(out.nit) + iterations


_METHODS = {"projected-newton": _solve_projected_newton, "slsqp": _solve_slsqp}


def solve_activations(
    tau: np.ndarray,
    moment_arms: np.ndarray,
    c: np.ndarray,
    f_pe: np.ndarray,
    *,
    initial: np.ndarray | None = None,
    penalty_weight: float = PENALTY_WEIGHT,
    max_iterations: int = MAX_ITERATIONS,
    method: SolverMethod = "projected-newton",
) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """
    Core solve on plain arrays.

    Args:
        tau: Required torques of the constrained DOFs, shape (k,).
        moment_arms: Moment arms, shape (k, muscles).
        c: Active force capacities, shape (muscles,).
        f_pe: Passive forces, shape (muscles,).

    Returns:
        Activations, achieved-minus-required torque residual, iterations and the infeasible flag.
    """
    if method not in _METHODS:
        raise InputError(f"unknown solver method {method!r}")
    tau = np.asarray(tau, dtype=float)
    R = np.asarray(moment_arms, dtype=float)
    b = tau - R @ f_pe
    A = R * c
    x0 = np.zeros(A.shape[1]) if initial is None else np.asarray(initial, dtype=float)
    tol = torque_tolerance(tau)

    a, iterations = _METHODS[method](A, b, x0, tol, penalty_weight, max_iterations)
    residual = A @ a - b
    infeasible = bool(np.linalg.norm(residual) > tol)
    return a, residual, iterations, infeasible


def distribute_torques(
    tau: JointTorqueFrame,
    states: MuscleStateFrame,
    model: MusculoskeletalModel,
    *,
    initial: np.ndarray | None = None,
    penalty_weight: float = PENALTY_WEIGHT,
    max_iterations: int = MAX_ITERATIONS,
    method: SolverMethod = "projected-newton",
) -> tuple[ActivationFrame, MuscleForceFrame]:
    """
    Distribute one frame's joint torques over the model's muscles.

    Raises:
        InputError: The torque and state frames have different timestamps.
        SolverDiverged: The iteration cap was reached before convergence.
    """
    if tau.t_ms != states.t_ms:
        raise InputError(f"torque frame at {tau.t_ms} ms paired with states at {states.t_ms} ms")
    active, skipped = crossed_dofs(model)
    c, f_pe = capacities(states.norm_lengths, states.velocities, model)
    try:
        a, residual, iterations, infeasible = solve_activations(
            tau.torques[active],
            states.moment_arms[:, active].T,
            c,
            f_pe,
            initial=initial,
            penalty_weight=penalty_weight,
            max_iterations=max_iterations,
            method=method,
        )
    except SolverDiverged as e:
        raise SolverDiverged(tau.t_ms, e.iterations, e.residual) from e

    full_residual = np.zeros(len(DofId))
    full_residual[active] = residual
    if infeasible:
        logger.debug(
            "Frame %d ms infeasible, residual %.3g N·m", tau.t_ms, np.linalg.norm(residual)
        )
    forces = f_pe + a * c
    activation = ActivationFrame(
        t_ms=tau.t_ms,
        names=states.names,
        activations=a,
        saturated=[n for n, v in zip(states.names, a, strict=True) if v >= 1.0],
    )
    force = MuscleForceFrame(
        t_ms=tau.t_ms,
        names=states.names,
        forces=forces,
        residual=full_residual,
        iterations=iterations,
        infeasible=infeasible,
        skipped_dofs=[d.key for d in skipped],
    )
    return activation, force


def frame_work(F: MuscleForceFrame, dt_s: float) -> WorkIncrementFrame:
    if not dt_s > 0:
        raise InputError(f"frame duration must be positive, got {dt_s}")
    return WorkIncrementFrame(t_ms=F.t_ms, names=F.names, increments=F.forces * dt_s)


@dataclass(frozen=True)
class ForceStream:
    """Solver output for every frame of a session."""

    t_ms: np.ndarray
    names: list[str]
    activations: np.ndarray
    forces: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray
    infeasible: np.ndarray
    skipped_dofs: list[str]

    def __len__(self) -> int:
        return len(self.t_ms)

    def work(self, dt_s: float) -> np.ndarray:
        """Per-frame work increments (frames, muscles) in N·s."""
        if not dt_s > 0:
            raise InputError(f"frame duration must be positive, got {dt_s}")
        return self.forces * dt_s


def distribute_stream(
    torques: np.ndarray,
    states: MuscleStates,
    model: MusculoskeletalModel,
    *,
    penalty_weight: float = PENALTY_WEIGHT,
    max_iterations: int = MAX_ITERATIONS,
    method: SolverMethod = "projected-newton",
) -> ForceStream:
    """Solve every frame in order, warm-starting each from its predecessor."""
    active, skipped = crossed_dofs(model)
    if skipped:
        logger.info("DOFs crossed by no muscle are skipped: %s", ", ".join(d.key for d in skipped))
    c, f_pe = capacities(states.norm_lengths, states.velocities, model)
    n, m = c.shape
    activations = np.zeros((n, m))
    residuals = np.zeros((n, len(DofId)))
    iterations = np.zeros(n, dtype=np.int64)
    infeasible = np.zeros(n, dtype=bool)

    previous = None
    for i in range(n):
        try:
            a, residual, its, flag = solve_activations(
                torques[i, active],
                states.moment_arms[i][:, active].T,
                c[i],
                f_pe[i],
                initial=previous,
                penalty_weight=penalty_weight,
                max_iterations=max_iterations,
                method=method,
            )
        except SolverDiverged as e:
            raise SolverDiverged(int(states.t_ms[i]), e.iterations, e.residual) from e
        activations[i], iterations[i], infeasible[i] = a, its, flag
        residuals[i, active] = residual
        previous = a

    if infeasible.any():
        logger.warning(
            "%d of %d frames exceed muscle capacity; torques relaxed to a penalty",
            int(infeasible.sum()),
            n,
        )
    return ForceStream(
        t_ms=states.t_ms,
        names=states.names,
        activations=activations,
        forces=f_pe + activations * c,
        residuals=residuals,
        iterations=iterations,
        infeasible=infeasible,
        skipped_dofs=[d.key for d in skipped],
    )


def write_debug_csv(forces: ForceStream, path: str | Path) -> Path:
    """Long-format dump with one row per frame and muscle."""
    n, m = forces.forces.shape
    frame = pd.DataFrame(
        {
            "t_ms": np.repeat(forces.t_ms, m),
            "muscle": np.tile(forces.names, n),
            "a": forces.activations.ravel(),
            "F": forces.forces.ravel(),
            "residual": np.repeat(np.linalg.norm(forces.residuals, axis=1), m),
        }
    )
    return write_csv(frame, path)
