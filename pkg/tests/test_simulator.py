import numpy as np
import pytest

from zklab import simulator
from zklab.errors import ConfigError, InvalidInputError
from zklab.grids import Field2D, PeriodicGrid2D


def _plane_wave(grid, k1=1, k2=2):
    X1, X2 = grid.meshgrid()
    xi1 = 2.0 * np.pi * k1 / grid.L1
    xi2 = 2.0 * np.pi * k2 / grid.L2
    return np.cos(xi1 * X1 + xi2 * X2), xi1, xi2


def test_linear_plane_wave_exact():
    grid = PeriodicGrid2D(64, 64, 16.0, 16.0)
    vals, xi1, xi2 = _plane_wave(grid)
    state = simulator.new_state(grid, vals)
    dt = 0.01
    n = 50
    for _ in range(n):
        state = simulator.step(state, dt, nonlinear=False)
    omega = xi1 * (xi1**2 + xi2**2)
    X1, X2 = grid.meshgrid()
    exact = np.cos(xi1 * X1 + xi2 * X2 + omega * state.t)
    assert np.max(np.abs(state.u.values - exact)) < 1e-10 * n


def test_cfl_guard():
    grid = PeriodicGrid2D(64, 64, 16.0, 16.0)
    state = simulator.new_state(grid, 10.0 * np.ones(grid.shape))
    with pytest.raises(InvalidInputError):
        simulator.step(state, 1.0)


def test_conservation_short_run():
    grid = PeriodicGrid2D(128, 128, 40.0, 40.0)
    X1, X2 = grid.meshgrid()
    u0 = 0.8 * np.exp(-0.5 * ((X1 - 3.0) ** 2 + X2**2))
    state = simulator.new_state(grid, u0)
    for _ in range(100):
        state = simulator.step(state, 2e-3)
    inv = simulator.conserved(state)
    assert inv["mass_drift"] < 1e-10
    assert abs(inv["energy"] - state.energy0) < 1e-10


def test_soliton_decomposition_identity(modref):
    grid = PeriodicGrid2D(256, 256, 40.0, 40.0)
    u = simulator.soliton_field(modref.Q, grid, lam0=1.0)
    m = simulator.modulation_decompose(u, modref)
    assert m.lam == pytest.approx(1.0, abs=1e-3)
    assert abs(m.b) < 1e-3
    assert abs(m.x1) < 1e-3 and abs(m.x2) < 1e-3
    assert np.max(np.abs(m.epsilon.values)) < 5e-3


def test_planted_decomposition_recovery(modref):
    grid = PeriodicGrid2D(256, 256, 40.0, 40.0)
    lam0, x0 = 1.3, (3.0, -2.0)
    u = simulator.soliton_field(modref.Q, grid, lam0=lam0, x0=x0)
    m = simulator.modulation_decompose(u, modref)
    assert m.lam == pytest.approx(lam0, abs=1e-3)
    assert m.x1 == pytest.approx(x0[0], abs=1e-3)
    assert m.x2 == pytest.approx(x0[1], abs=1e-3)


def test_tube_distance_zero_on_soliton(modref):
    grid = PeriodicGrid2D(128, 128, 40.0, 40.0)
    u = simulator.soliton_field(modref.Q, grid, lam0=0.9, x0=(1.0, 2.0))
    assert simulator.tube_distance(u, modref.Q) < 1e-2


def test_tube_distance_positive_off_family(modref):
    grid = PeriodicGrid2D(64, 64, 40.0, 40.0)
    X1, X2 = grid.meshgrid()
    u = Field2D(grid=grid, values=np.exp(-0.1 * (X1**2 + X2**2)))
    assert simulator.tube_distance(u, modref.Q) > 0.1


def test_weighted_moment_no_overflow():
    from zklab.grids import BoxGrid2D
    box = BoxGrid2D.square(16.0, 0.5)
    X1, X2 = box.meshgrid()
    eps = Field2D(grid=box, values=np.exp(-(X1**2 + X2**2)))
    m = simulator.weighted_moment(eps, power=100)
    assert np.isfinite(m)
    assert m > 0.0
    zero = Field2D(grid=box, values=np.zeros(box.shape))
    assert simulator.weighted_moment(zero) == 0.0


def test_parse_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment\n"
        "grid.n = 128\n"
        "dt = 0.002\n"
        "init.kind = qb\n"
        "init.b0 = 0.05\n"
    )
    cfg = simulator.parse_config(str(path))
    assert cfg.n == 128
    assert cfg.dt == 0.002
    assert cfg.init_kind == "qb"
    assert cfg.init_b0 == 0.05
    assert cfg.box == 40.0  # default preserved


def test_parse_config_rejects_bad_input(tmp_path):
    for text in ("no_equals_here\n", "unknown.key = 3\n", "dt = not_a_number\n",
                 "init.kind = warp\n"):
        path = tmp_path / "bad.cfg"
        path.write_text(text)
        with pytest.raises(ConfigError):
            simulator.parse_config(str(path))


def test_qb_initial_field_vanishes_at_seam(modref):
    grid = PeriodicGrid2D(128, 128, 40.0, 40.0)
    u = simulator.qb_initial_field(modref, grid, b0=0.05)
    assert abs(u.values[0, :]).max() < 1e-12
    assert abs(u.values[:, 0]).max() < 1e-12


def test_short_run_records_series(modref):
    cfg = simulator.RunConfig(n=128, box=40.0, dt=0.004, t_end=0.2, cadence=10)
    res = simulator.run(cfg, modref)
    assert res.stopped == "t_end"
    assert len(res.series["t"]) >= 3
    assert res.series["lambda"][0] == pytest.approx(1.0, abs=2e-2)
    assert np.all(np.isfinite(res.series["b_over_lambda_theta"]))


def test_fit_scaling_law_on_synthetic():
    T, p = 10.0, 0.75
    t = np.linspace(0.0, 8.0, 200)
    lam = (T - t) ** p / T**p  # starts at 1, hits the fit window below 0.7
    fit = simulator.fit_scaling_law(t, lam)
    assert fit is not None
    assert fit["T_fit"] == pytest.approx(T, rel=1e-3)
    assert fit["exponent"] == pytest.approx(p, rel=1e-3)
