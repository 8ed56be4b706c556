import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hamscope.dynamics import VelocityTrajectory, central_differences, smooth
from hamscope.embed import StateTrajectory
from hamscope.errors import BadWindow, TrajectoryTooShort


def _traj(values, dt=1.0):
    values = np.asarray(values, dtype=float)
    return StateTrajectory(values.reshape(len(values), -1), dt)


def test_constant_trajectory_zero_velocity():
    vt = central_differences(_traj(np.full((10, 2), 3.7)))
    assert np.all(vt.velocities == 0.0)


def test_linear_trajectory_exact():
    t = np.arange(8.0)
    vt = central_differences(_traj(np.c_[2.5 * t, -t]))
    np.testing.assert_array_equal(vt.velocities, np.tile([2.5, -1.0], (6, 1)))


def test_quadratic_at_three():
    t = np.arange(6.0)
    vt = central_differences(_traj(t**2))
    # interior row k is source index k + 1
    assert vt.velocities[2, 0] == 6.0
    assert vt.states[2, 0] == 9.0


def test_shapes_and_times():
    z = StateTrajectory(np.zeros((12, 2)), 0.5, t0=10.0)
    vt = central_differences(z)
    assert len(vt) == 10
    assert vt.times[0] == 10.5


def test_too_short():
    with pytest.raises(TrajectoryTooShort):
        central_differences(_traj(np.zeros((2, 2))))


@given(
    a=st.floats(-10, 10), b=st.floats(-10, 10), c=st.floats(-10, 10),
    dt=st.floats(0.01, 2.0), T=st.integers(3, 40),
)
def test_exact_on_quadratics(a, b, c, dt, T):
    t = dt * np.arange(T)
    vt = central_differences(_traj(a + b * t + c * t**2, dt))
    expected = b + 2 * c * t[1:-1]
    scale = 1 + np.abs(b) + np.abs(2 * c * t[1:-1]) + abs(a) / dt
    assert np.all(np.abs(vt.velocities[:, 0] - expected) <= 1e-10 * scale)


def test_sine_error_bound_and_order():
    omega = 1.3
    errs = []
    for dt in (0.05, 0.025):
        t = dt * np.arange(int(10 / dt))
        vt = central_differences(_traj(np.sin(omega * t), dt))
        err = np.max(np.abs(vt.velocities[:, 0] - omega * np.cos(omega * t[1:-1])))
        assert err <= omega**3 * dt**2 / 6 * 1.1
        errs.append(err)
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_smooth_window_one_identity():
    z = _traj(np.arange(5.0))
    assert smooth(z, 1) is z


def test_smooth_shrunken_ends():
    out = smooth(_traj([0.0, 3.0, 0.0]), 3)
    np.testing.assert_allclose(out.states[:, 0], [1.5, 1.0, 1.5])


def test_smooth_constant_unchanged():
    z = _traj(np.full((9, 2), -4.25))
    for w in (3, 5, 9):
        np.testing.assert_array_equal(smooth(z, w).states, z.states)


@given(shift=st.floats(-1e3, 1e3), window=st.sampled_from([1, 3, 5, 7]))
def test_smooth_commutes_with_constants(shift, window):
    base = np.sin(np.arange(15.0))[:, None] * [1.0, 2.0]
    a = smooth(_traj(base + shift), window).states
    b = smooth(_traj(base), window).states + shift
    np.testing.assert_allclose(a, b, atol=1e-9 * (1 + abs(shift)))


@pytest.mark.parametrize("window", [0, 2, 11, -1])
def test_smooth_bad_window(window):
    with pytest.raises(BadWindow):
        smooth(_traj(np.zeros(9)), window)


def test_velocity_trajectory_validates():
    with pytest.raises(ValueError):
        VelocityTrajectory(np.zeros((3, 2)), np.zeros((2, 2)), 1.0)
    with pytest.raises(ValueError):
        VelocityTrajectory(np.zeros((3, 2)), np.full((3, 2), np.nan), 1.0)
