import numpy as np
import pytest

from zklab import dynamics

THETA = 1.66032


def test_closed_form_blowup_time():
    assert dynamics.blowup_time(0.1, THETA) == pytest.approx(
        1.0 / (0.1 * (3.0 - THETA))
    )


def test_integrate_matches_closed_form():
    traj = dynamics.integrate(0.1, THETA, t_end=6.0, dt=1e-3)
    lam_exact, b_exact = dynamics.closed_form(0.1, THETA, traj.t)
    assert np.max(np.abs(traj.lam - lam_exact) / lam_exact) < 1e-6
    assert np.max(np.abs(traj.b - b_exact) / np.abs(b_exact)) < 1e-6


def test_conserved_quantity():
    traj = dynamics.integrate(0.1, THETA, t_end=6.0, dt=1e-3)
    c = traj.b / traj.lam**THETA
    assert np.max(np.abs(c - c[0])) < 1e-8


def test_negative_b_grows():
    traj = dynamics.integrate(-0.1, THETA, t_end=6.0, dt=1e-3)
    assert traj.lam[-1] > traj.lam[0]
    assert not traj.singular


def test_regime_prediction():
    assert dynamics.predict(0.0, THETA).regime == dynamics.SOLITON
    pos = dynamics.predict(0.1, THETA)
    assert pos.regime == dynamics.BLOWUP
    assert pos.T == pytest.approx(dynamics.blowup_time(0.1, THETA))
    neg = dynamics.predict(-0.1, THETA)
    assert neg.regime == dynamics.GROWTH


def test_blowup_time_fit():
    traj = dynamics.integrate(0.1, THETA, t_end=7.2, dt=1e-3)
    T_fit = dynamics.fit_blowup_time(traj, THETA)
    assert T_fit == pytest.approx(dynamics.blowup_time(0.1, THETA), rel=0.01)


def test_save_trajectory(tmp_path):
    traj = dynamics.integrate(0.05, THETA, t_end=1.0, dt=1e-2)
    path = tmp_path / "traj.csv"
    dynamics.save_trajectory(str(path), traj, THETA)
    header = path.read_text().splitlines()[0]
    assert header.split(",")[:4] == ["t", "s", "lambda", "b"]
