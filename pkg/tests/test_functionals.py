import numpy as np
import pytest
from scipy.integrate import quad

from zklab import functionals as F
from zklab.grids import Field2D

THETA = 1.66032


@pytest.fixture(scope="module")
def W8():
    return F.build_weights(8.0)


def test_zeta_branches_and_unit_mass(W8):
    y = np.array([0.0, 0.05, 0.1])
    np.testing.assert_allclose(W8.zeta(y), 1.0)
    far = np.array([0.2, 0.5, 1.0, 3.0])
    np.testing.assert_allclose(W8.zeta(far), np.exp(-2.0 * far), rtol=1e-12)
    np.testing.assert_allclose(W8.zeta(-far), np.exp(-2.0 * far), rtol=1e-12)
    total, _ = quad(W8.zeta, -30.0, 30.0, limit=200)
    assert total == pytest.approx(1.0, abs=1e-8)
    # positive everywhere, bounded by 1
    t = np.linspace(-1.0, 1.0, 2001)
    assert np.all(W8.zeta(t) > 0.0)
    assert np.all(W8.zeta(t) <= 1.0 + 1e-14)


def test_theta_weights_branches(W8):
    for i in (0, 1, 2):
        y = np.linspace(-2.0, 0.45, 100)
        np.testing.assert_allclose(W8.theta_i(y, i), 0.5)
        far = np.array([1.0, 1.5, 2.0])
        np.testing.assert_allclose(W8.theta_i(far, i), far ** (i + 6), rtol=1e-9)
        t = np.linspace(0.4, 1.1, 2001)
        assert np.all(np.diff(W8.theta_i(t, i)) >= -1e-12)


def test_psi_B_sandwiches(W8):
    B = W8.B
    y = np.linspace(-10 * B, 10 * B, 2001)
    psi = W8.psi_B(y)
    assert np.all(psi > 0.0)
    assert np.all(psi < 0.5)
    assert np.all(np.diff(psi) > 0.0)
    # left-tail sandwich e^{2y/B} <= psi_B <= 2 e^{2y/B} for y < -B
    left = y[y < -B]
    tail = np.exp(2.0 * left / B)
    assert np.all(W8.psi_B(left) >= tail)
    assert np.all(W8.psi_B(left) <= 2.0 * tail)


def test_phi_sandwich(W8):
    # sqrt(2)/2 <= phi_{i,B}/e^{y/B} <= 1 on the left tail
    B = W8.B
    y = np.linspace(-10 * B, -B, 1001)
    ratio = W8.phi_iB(y, 0) / np.exp(y / B)
    assert np.all(ratio >= np.sqrt(2.0) / 2.0 - 1e-12)
    assert np.all(ratio <= 1.0 + 1e-12)


def test_weight_audit_all_pass():
    reports = {}
    for B in (8.0, 16.0, 32.0):
        rep = F.weight_inequality_audit(F.build_weights(B))
        assert all(rep["exact"].values()), [k for k, v in rep["exact"].items() if not v]
        assert all(np.isfinite(v) for v in rep["ratios"].values())
        reports[B] = rep
    stability = F.audit_stability(reports)
    assert all(v <= 4.0 for v in stability.values()), stability


def test_build_weights_rejects_small_B():
    from zklab.errors import InvalidInputError
    with pytest.raises(InvalidInputError):
        F.build_weights(2.0)


def test_sigma_profiles(modref):
    Qf = Field2D(modref.box, modref.Qf)
    sig = F.sigma_profiles(Qf)
    assert sig.c2 > 0.0
    assert sig.F_norm_sq == pytest.approx(4.0 * modref.P.diagnostics["PQ"], rel=1e-2)
    # sigma3 is odd in y2
    s3 = sig.sigma3.values
    np.testing.assert_allclose(s3, -s3[:, ::-1], atol=1e-12)


def test_zero_epsilon_sample(modref, W8):
    Qf = Field2D(modref.box, modref.Qf)
    zero = Field2D(modref.box, np.zeros_like(modref.Qf))
    s = F.compute_sample(zero, 1.0, 0.0, Qf, W8, THETA)
    assert s.N0 == s.N1 == s.N2 == 0.0
    assert s.J1 == 0.0 and s.P == 0.0
    assert all(v == 0.0 for v in s.Fij.values())
    assert all(v == 0.0 for v in s.Mij.values())


def test_sample_identities_and_eta(modref, W8):
    rng = np.random.default_rng(3)
    box = modref.box
    X1, X2 = box.meshgrid()
    e = rng.standard_normal(box.shape) * np.exp(-0.1 * (X1**2 + X2**2))
    e[-1, :] = e[0, :]
    e[:, -1] = e[:, 0]
    e *= 1e-3 / np.sqrt(box.integrate(e**2))
    eps = Field2D(box, e)
    Qf = Field2D(box, modref.Qf)
    sig = F.sigma_profiles(Qf)
    s = F.compute_sample(eps, 1.0, 0.0, Qf, W8, THETA, sigma=sig)

    # J_ij is an exact function of J1
    for (i, j), v in s.Jij.items():
        expect = (1.0 - s.J1) ** (-2.0 * THETA * (j - 1) - 2 * i - 12) - 1.0
        assert v == pytest.approx(expect, rel=1e-13)
    # M_ij = F_ij + B^-20 P exactly
    for ij in s.Mij:
        assert s.Mij[ij] == s.Fij[ij] + W8.B**-20 * s.P
    # Helmholtz solve is spectrally exact on the periodic extension
    assert s.eta_residual < 1e-10
    # N_i are nonnegative and ordered by their weights
    assert s.N0 > 0.0 and s.N1 > 0.0 and s.N2 > 0.0


def test_save_series_roundtrip(tmp_path):
    n = 4
    series = {k: np.linspace(0, 1, n) for k in F.SERIES_COLUMNS}
    path = tmp_path / "series.csv"
    F.save_series(str(path), series)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(F.SERIES_COLUMNS)
    assert len(lines) == n + 1
