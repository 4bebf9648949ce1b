import numpy as np
import pytest

from zklab import profiles
from zklab.errors import InvalidInputError, OutOfRegimeError
from zklab.grids import RadialGrid


def test_lambda_q_zero_pairing(q_fast):
    # (Q, LambdaQ) = 0 by the scaling invariance of the mass
    from zklab import groundstate
    lam = profiles.lambda_q(q_fast.Q)
    pairing = groundstate.radial_integral(q_fast.Q, q_fast.Q.values * lam.values)
    assert abs(pairing) / q_fast.mass < 1e-4


def test_compute_F_even_and_decaying(q_fast):
    lam = profiles.lambda_q(q_fast.Q)
    record = {}
    F = profiles.compute_F(lam, record=record)
    np.testing.assert_allclose(F.values, F.values[::-1], atol=1e-14)
    assert record["symmetrization_diff"] < 1e-12
    assert abs(F.values[0]) < 1e-3 * np.max(np.abs(F.values))


def test_fourier_roundtrip(q_fast):
    lam = profiles.lambda_q(q_fast.Q)
    F = profiles.compute_F(lam)
    back = profiles.inverse_fourier_1d(profiles.fourier_1d(F))
    np.testing.assert_allclose(back.values, F.values, atol=1e-12)


def test_parseval(q_fast):
    lam = profiles.lambda_q(q_fast.Q)
    F = profiles.compute_F(lam)
    Fhat = profiles.fourier_1d(F)
    left = np.trapezoid(F.values**2, dx=F.dx)
    right = np.trapezoid(np.abs(Fhat.values) ** 2, dx=Fhat.dxi)
    assert left == pytest.approx(right, rel=1e-8)


def test_fourier_rejects_uncentered_grid():
    f = profiles.Profile1D(x=np.linspace(0.0, 1.0, 16), values=np.ones(16))
    with pytest.raises(InvalidInputError):
        profiles.fourier_1d(f)


def test_compute_h2_residual(q_fast):
    lam = profiles.lambda_q(q_fast.Q)
    F = profiles.compute_F(lam)
    h2, rel = profiles.compute_h2(F)
    assert rel < 1e-10
    # h2 decays and is even
    np.testing.assert_allclose(h2.values, h2.values[::-1], atol=1e-10)


def test_theta_pipeline_value():
    out = profiles.theta_pipeline(0.05, 10.0)
    assert out["theta"].theta == pytest.approx(1.65849, abs=1e-3)
    assert 5.0 / 7.0 < out["theta"].beta < 5.0 / 6.0


def test_theta_table_records_errors():
    rows = profiles.theta_table([0.05], [5.0])
    assert rows[0]["theta"] is not None
    assert rows[0]["error"] is None


def test_solve_P_identity(modref):
    d = modref.P.diagnostics
    # (P, Q) = (1/4) int F^2 is the defining compatibility identity
    assert d["PQ"] == pytest.approx(d["quarter_F2"], rel=1e-3)


def test_build_localized_regime_guard(q_fast, modref):
    with pytest.raises(OutOfRegimeError):
        profiles.build_localized(modref.Q, modref.P, 0.5)


def test_build_localized_b0_is_Q(modref):
    loc = profiles.build_localized(modref.Q, modref.P, 0.0)
    np.testing.assert_allclose(loc.Qb.values, modref.Qf, atol=1e-12)
    # Psi_0 = d_y1(-Delta Q + Q - Q^3) is small since Q solves the equation
    # (limited by the finite-difference truncation of the third derivative)
    assert loc.pairings["psi_norm"] < 2e-2


def test_theta_cross_check(modref):
    pair = {}
    for b in (0.08, 0.04, 0.02):
        loc = profiles.build_localized(modref.Q, modref.P, b)
        pair[b] = loc.pairings["psi_Q"]
    out = profiles.theta_cross_check(modref.P, pair)
    assert out["theta_alt"] == pytest.approx(1.66032, rel=0.03)


def test_psib_pairing_extrapolates(modref):
    # (Psi_b, Q)/b^2 -> -I1/2 as b -> 0 (Richardson in b)
    bs = np.array([0.1, 0.05, 0.025])
    g = []
    for b in bs:
        loc = profiles.build_localized(modref.Q, modref.P, b)
        g.append(loc.pairings["psi_Q"] / b**2)
    coef = np.polynomial.polynomial.polyfit(bs, np.array(g), deg=2)
    lam = profiles.lambda_q(modref.Q)
    F = profiles.compute_F(lam)
    th = profiles.compute_theta(profiles.fourier_1d(F))
    assert coef[0] == pytest.approx(-th.I1 / 2.0, rel=0.02)


def test_qb_energy_pairing_bounded(modref):
    # |E(Q_b) + b (P,Q)| <= C b^2 with a finite C over the sampled range
    PQ = modref.P.diagnostics["PQ"]
    for b in (0.1, 0.05, 0.025):
        loc = profiles.build_localized(modref.Q, modref.P, b)
        C = abs(loc.pairings["energy"] + b * PQ) / b**2
        assert C < 20.0


@pytest.mark.xfail(
    reason="the constant in |E(Q_b)+b(P,Q)| <= C b^2 drifts by a factor ~2 "
    "over b in {0.1, 0.05, 0.025} (8.3 -> 13.3 -> 17.2): the moving cutoff "
    "phi_b contributes a correction between b^2 and b at these amplitudes, "
    "so the constant is bounded but not numerically stable at desk scale",
    strict=True,
)
def test_qb_energy_pairing_constant_stable(modref):
    PQ = modref.P.diagnostics["PQ"]
    Cs = []
    for b in (0.1, 0.05, 0.025):
        loc = profiles.build_localized(modref.Q, modref.P, b)
        Cs.append(abs(loc.pairings["energy"] + b * PQ) / b**2)
    assert max(Cs) / min(Cs) < 1.25


def test_smoothstep_and_cutoff():
    assert profiles.smoothstep(np.array([-1.0]))[0] == 0.0
    assert profiles.smoothstep(np.array([2.0]))[0] == 1.0
    s = profiles.smoothstep(np.linspace(0, 1, 100))
    assert np.all(np.diff(s) >= 0)
    assert profiles.cutoff_phi(np.array([-3.0]))[0] == 0.0
    assert profiles.cutoff_phi(np.array([0.0]))[0] == 1.0
