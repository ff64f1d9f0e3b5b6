import numpy as np
import pandas as pd
import pytest
from scipy import integrate

from app.errors import InputError
from app.models import DofId, JointTorqueFrame
from app.muscle_model import MuscleStateFrame, load_model
from app.solver import (
    ForceStream,
    MuscleForceFrame,
    capacities,
    crossed_dofs,
    distribute_torques,
    frame_work,
    solve_activations,
    torque_tolerance,
    write_debug_csv,
)


@pytest.fixture(scope="module")
def model():
    return load_model()


def random_problem(rng: np.random.Generator, muscles: int, dofs: int):
    """A feasible problem whose last `dofs` columns form a well-conditioned basis."""
    while True:
        A = rng.uniform(-2.0, 2.0, size=(dofs, muscles))
        if np.linalg.svd(A[:, muscles - dofs :], compute_uv=False).min() > 0.5:
            break
    b = A @ rng.uniform(0.05, 0.6, size=muscles)
    return A, b


def grid_minimizer(A: np.ndarray, b: np.ndarray, step: float = 0.001) -> np.ndarray:
    """Brute-force min Σa² over a one-dimensional grid, solving the basis activations exactly."""
    dofs, muscles = A.shape
    free = muscles - dofs
    axis = np.arange(0.0, 1.0 + step / 2, step)
    grid = np.stack(np.meshgrid(*[axis] * free, indexing="ij"), axis=-1).reshape(-1, free)
    basis = np.linalg.solve(A[:, free:], (b[:, None] - A[:, :free] @ grid.T)).T
    candidates = np.hstack([grid, basis])
    feasible = np.all((candidates >= 0.0) & (candidates <= 1.0), axis=1)
    candidates = candidates[feasible]
    return candidates[np.argmin(np.sum(candidates**2, axis=1))]


@pytest.mark.parametrize("method", ["projected-newton", "slsqp"])
def test_solver_matches_brute_force(method):
    rng = np.random.default_rng(11)
    shapes = [(2, 1), (3, 2)]
    for i in range(20):
        muscles, dofs = shapes[i % len(shapes)]
        A, b = random_problem(rng, muscles, dofs)
        a, residual, _, infeasible = solve_activations(
            b, A, np.ones(muscles), np.zeros(muscles), method=method
        )
        assert not infeasible
        assert np.linalg.norm(residual) <= torque_tolerance(b)
        np.testing.assert_allclose(a, grid_minimizer(A, b), atol=0.01)


def test_zero_torque_needs_no_activation():
    a, residual, _, infeasible = solve_activations(
        np.zeros(2), np.ones((2, 3)), np.full(3, 100.0), np.zeros(3)
    )
    np.testing.assert_array_equal(a, 0.0)
    assert not infeasible
    assert np.all(residual == 0.0)


def test_demand_beyond_capacity_saturates_and_flags():
    a, residual, _, infeasible = solve_activations(
        np.array([5.0]), np.array([[1.0, 1.0]]), np.ones(2), np.zeros(2)
    )
    np.testing.assert_allclose(a, 1.0, atol=1e-5)
    assert infeasible
    assert residual[0] == pytest.approx(-3.0, abs=1e-4)


def test_passive_force_reduces_required_activation():
    R = np.array([[0.05]])
    without, *_ = solve_activations(np.array([10.0]), R, np.array([1000.0]), np.zeros(1))
    with_passive, *_ = solve_activations(np.array([10.0]), R, np.array([1000.0]), np.array([50.0]))
    assert without[0] == pytest.approx(0.2, abs=1e-6)
    assert with_passive[0] == pytest.approx(0.15, abs=1e-6)


def test_unknown_method():
    with pytest.raises(InputError):
        solve_activations(np.zeros(1), np.ones((1, 1)), np.ones(1), np.zeros(1), method="cg")


def test_torque_tolerance():
    assert torque_tolerance(np.zeros(3)) == 1e-6
    assert torque_tolerance(np.array([30.0, 40.0])) == pytest.approx(5e-3)


def test_capacities_at_optimal_length(model):
    c, f_pe = capacities(np.ones(24), np.zeros(24), model)
    np.testing.assert_allclose(c, [m.hill.f_max for m in model.muscles])
    np.testing.assert_array_equal(f_pe, 0.0)


def test_crossed_dofs(model):
    active, skipped = crossed_dofs(model)
    assert skipped == [
        DofId.HIP_ABDUCTION_L,
        DofId.ANKLE_FLEXION_L,
        DofId.HIP_ABDUCTION_R,
        DofId.ANKLE_FLEXION_R,
        DofId.TRUNK_FLEXION,
    ]
    assert len(active) == 10


def state_frame(model, t_ms: int) -> MuscleStateFrame:
    return MuscleStateFrame(
        t_ms=t_ms,
        names=model.names,
        lengths=np.full(24, 0.2),
        norm_lengths=np.ones(24),
        velocities=np.zeros(24),
        moment_arms=np.zeros((24, 15)),
    )


def test_distribute_torques_zero_demand(model):
    activation, force = distribute_torques(
        JointTorqueFrame(t_ms=17, torques=np.zeros(15)), state_frame(model, 17), model
    )
    np.testing.assert_array_equal(activation.activations, 0.0)
    np.testing.assert_array_equal(force.forces, 0.0)
    assert activation.saturated == []
    assert not force.infeasible
    assert force.skipped_dofs == [
        "hip_abduction_l",
        "ankle_flexion_l",
        "hip_abduction_r",
        "ankle_flexion_r",
        "trunk_flexion",
    ]
    assert force.residual.shape == (15,)


def test_distribute_torques_timestamp_mismatch(model):
    with pytest.raises(InputError):
        distribute_torques(
            JointTorqueFrame(t_ms=17, torques=np.zeros(15)), state_frame(model, 0), model
        )


def test_frame_work():
    F = MuscleForceFrame(
        t_ms=0,
        names=["a", "b"],
        forces=np.array([100.0, 0.0]),
        residual=np.zeros(15),
        iterations=1,
        infeasible=False,
    )
    w = frame_work(F, 0.5)
    np.testing.assert_array_equal(w.increments, [50.0, 0.0])
    with pytest.raises(InputError):
        frame_work(F, 0.0)


def test_force_stream_work_and_debug_dump(tmp_path):
    residuals = np.zeros((2, 15))
    residuals[1, 0] = 3.0
    residuals[1, 1] = 4.0
    forces = ForceStream(
        t_ms=np.array([0, 17]),
        names=["a", "b"],
        activations=np.array([[0.1, 0.2], [0.3, 0.4]]),
        forces=np.array([[10.0, 20.0], [30.0, 40.0]]),
        residuals=residuals,
        iterations=np.array([1, 2]),
        infeasible=np.array([False, True]),
        skipped_dofs=[],
    )
    np.testing.assert_allclose(forces.work(0.1), [[1.0, 2.0], [3.0, 4.0]])

    dump = pd.read_csv(write_debug_csv(forces, tmp_path / "debug.csv"))
    assert list(dump.columns) == ["t_ms", "muscle", "a", "F", "residual"]
    assert dump["muscle"].tolist() == ["a", "b", "a", "b"]
    assert dump["t_ms"].tolist() == [0, 0, 17, 17]
    assert dump["residual"].tolist() == [0.0, 0.0, 5.0, 5.0]


def test_work_of_a_periodic_force_matches_quadrature():
    dt = 1 / 60
    t = np.arange(120) * dt

    def force(x):
        return 200.0 * np.sin(np.pi * x) ** 2

    stream = ForceStream(
        t_ms=np.round(t * 1000).astype(int),
        names=["a"],
        activations=np.zeros((120, 1)),
        forces=force(t)[:, None],
        residuals=np.zeros((120, 15)),
        iterations=np.ones(120, dtype=int),
        infeasible=np.zeros(120, dtype=bool),
        skipped_dofs=[],
    )
    expected, _ = integrate.quad(force, 0.0, 2.0)
    assert stream.work(dt).sum() == pytest.approx(expected, rel=1e-9)
