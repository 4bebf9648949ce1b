"""Weight families and Lyapunov functionals.

The module builds the one-dimensional weights zeta, theta_i, psi_B,
phi_{i,B}, psi_{0,B}, psi_{1,B}, sigma, chi_B and Phi; audits the pointwise
inequalities they are required to satisfy; and evaluates the quadratic
diagnostics N_i, J_1, J_{ij}, F_{ij}, eta, P and M_{ij} on decomposed
states.

Shapes are fixed by exact displayed branches (exponential tails, plateaus,
power growth) joined by C^2 transitions.  Transitions of strictly positive
weights are built in log space, which makes monotonicity verifiable by
inspecting a single derivative expression.  psi_B itself is a scaled
logistic profile: psi_B(y) = 1/(2 (1 + c e^{-2y/B})) with c = 0.3, which is
smooth, strictly increasing, tends to 1/2, and satisfies the two-sided tail
bounds e^{2y/B} <= psi_B <= 2 e^{2y/B} and (sqrt2/2) e^{y/B} <= phi_{i,B}
<= e^{y/B} for y < -B with constant margin.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import InvalidInputError, NumericalFailureError
from .grids import BoxGrid2D, Field2D
from .profiles import first_difference_4th, smoothstep

PSI_TAIL_C = 0.3  # logistic offset; tail constant of psi_B is 1/(2c) = 5/3


# ---------------------------------------------------------------------------
# scalar weight shapes (B-independent)


def _log_blend(x, left_log, left_val_log, right_log, t):
    """exp of a smoothstep blend between two log-branch values."""
    s = smoothstep(t)
    return np.exp(left_log * (1.0 - s) + right_log * s)


@lru_cache(maxsize=1)
def _zeta_bump_amplitude() -> float:
    """Bump amplitude (in log space) making the total integral of zeta
    exactly 1.

    With the displayed branches (1 on |y|<1/10, e^{-2|y|} on |y|>1/6) any
    transition staying below 1 integrates to more than 1, so the transition
    must dip; the dip is a -sin^4 bump in log space, which keeps zeta
    positive automatically."""
    lo, hi = 0.1, 1.0 / 6.0

    def trans_integral(kappa):
        val, _ = quad(lambda y: _zeta_transition(np.array([y]), kappa)[0],
                      lo, hi, limit=200)
        return val

    fixed = 0.2 + np.exp(-1.0 / 3.0)  # plateau + two exponential tails

    def gap(kappa):
        return fixed + 2.0 * trans_integral(kappa) - 1.0

    try:
        return float(brentq(gap, -8.0, 0.0, xtol=1e-14))
    except ValueError as exc:
        raise NumericalFailureError(f"zeta normalization failed: {exc}")


def _zeta_transition(y: np.ndarray, kappa: float) -> np.ndarray:
    """Transition of zeta on [1/10, 1/6] (y positive)."""
    lo, hi = 0.1, 1.0 / 6.0
    t = (y - lo) / (hi - lo)
    s = smoothstep(t)
    log_val = -2.0 * y * s + kappa * np.sin(np.pi * t) ** 4
    return np.exp(log_val)


def zeta(y) -> np.ndarray:
    """Even weight with exact branches 1 (|y|<1/10), e^{-2|y|} (|y|>1/6)
    and int zeta = 1."""
    a = np.abs(np.asarray(y, dtype=float))
    out = np.empty_like(a)
    plateau = a <= 0.1
    tail = a >= 1.0 / 6.0
    mid = ~plateau & ~tail
    out[plateau] = 1.0
    out[tail] = np.exp(-2.0 * a[tail])
    if np.any(mid):
        out[mid] = _zeta_transition(a[mid], _zeta_bump_amplitude())
    return out


@lru_cache(maxsize=8)
def _theta_density_exponent(i: int) -> float:
    """Exponent m of the transition density (i+6) y^{i+5} s(t)^m chosen so
    that theta_i(1) = 1 exactly."""

    def integral(m):
        val, _ = quad(
            lambda y: (i + 6) * y ** (i + 5)
            * smoothstep(2.0 * (y - 0.5)) ** m,
            0.5, 1.0, limit=200,
        )
        return val

    try:
        return float(brentq(lambda m: integral(m) - 0.5, 0.7, 80.0,
                            xtol=1e-13))
    except ValueError as exc:
        raise NumericalFailureError(
            f"theta_{i} transition normalization failed: {exc}")


@lru_cache(maxsize=8)
def _theta_transition_spline(i: int):
    m = _theta_density_exponent(i)
    y = np.linspace(0.5, 1.0, 4001)
    dens = (i + 6) * y ** (i + 5) * smoothstep(2.0 * (y - 0.5)) ** m
    return CubicSpline(y, dens).antiderivative()


def theta_weight(y, i: int) -> np.ndarray:
    """Monotone weight theta_i: 1/2 for y<1/2, y^{i+6} for y>1."""
    if i not in (0, 1, 2):
        raise InvalidInputError(f"theta_i defined for i in {{0,1,2}}, got {i}")
    x = np.asarray(y, dtype=float)
    out = np.empty_like(x)
    left = x <= 0.5
    right = x >= 1.0
    mid = ~left & ~right
    out[left] = 0.5
    out[right] = x[right] ** (i + 6)
    if np.any(mid):
        out[mid] = 0.5 + _theta_transition_spline(i)(x[mid])
    return out


def sigma_cutoff(y) -> np.ndarray:
    """Even cutoff: 1 on |y|<=1, 0 on |y|>=2, C^2 decreasing in between."""
    a = np.abs(np.asarray(y, dtype=float))
    return 1.0 - smoothstep(a - 1.0)


def psi0(y) -> np.ndarray:
    """Exact branches e^{6y} (y<-1) and 1/2 (y>-1/2); log-space blend."""
    x = np.asarray(y, dtype=float)
    out = np.empty_like(x)
    left = x <= -1.0
    right = x >= -0.5
    mid = ~left & ~right
    out[left] = np.exp(6.0 * x[left])
    out[right] = 0.5
    if np.any(mid):
        xm = x[mid]
        s = smoothstep(2.0 * (xm + 1.0))
        out[mid] = np.exp(6.0 * xm * (1.0 - s) + np.log(0.5) * s)
    return out


def psi1(y) -> np.ndarray:
    """Exact branches e^{10y} (y<-1) and 1+y (y>-1/2); log-space blend."""
    x = np.asarray(y, dtype=float)
    out = np.empty_like(x)
    left = x <= -1.0
    right = x >= -0.5
    mid = ~left & ~right
    out[left] = np.exp(10.0 * x[left])
    out[right] = 1.0 + x[right]
    if np.any(mid):
        xm = x[mid]
        s = smoothstep(2.0 * (xm + 1.0))
        out[mid] = np.exp(10.0 * xm * (1.0 - s) + np.log1p(xm) * s)
    return out


@lru_cache(maxsize=1)
def _psi0_antiderivative():
    """Antiderivative of psi0 on the transition zone [-1, -1/2]."""
    x = np.linspace(-1.0, -0.5, 4001)
    return CubicSpline(x, psi0(x)).antiderivative()


def psi0_antiderivative(x) -> np.ndarray:
    """int_{-infty}^{x} psi0, piecewise closed form plus transition spline."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    left = x <= -1.0
    right = x >= -0.5
    mid = ~left & ~right
    out[left] = np.exp(6.0 * x[left]) / 6.0
    a_left = np.exp(-6.0) / 6.0
    sp = _psi0_antiderivative()
    a_mid_full = float(sp(-0.5))
    if np.any(mid):
        out[mid] = a_left + sp(x[mid])
    out[right] = a_left + a_mid_full + 0.5 * (x[right] + 0.5)
    return out


def big_phi(y) -> np.ndarray:
    """Phi: 0 for y<=0, y^100 for y>0 (smooth to high order at 0)."""
    x = np.asarray(y, dtype=float)
    return np.where(x > 0.0, np.maximum(x, 0.0) ** 100, 0.0)


# ---------------------------------------------------------------------------
# B-scaled family


@dataclass(frozen=True)
class WeightFamily:
    """Evaluators of all B-scaled weights.  B >= 4 (desk scale; the
    analysis behind these weights assumes B large)."""

    B: float

    def __post_init__(self):
        if self.B < 4:
            raise InvalidInputError(f"B must be >= 4, got {self.B}")

    def zeta(self, y):
        return zeta(y)

    def theta_i(self, y, i):
        return theta_weight(y, i)

    def psi_B(self, y):
        x = np.asarray(y, dtype=float) / self.B
        return 0.5 / (1.0 + PSI_TAIL_C * np.exp(-2.0 * x))

    def theta_iB(self, y, i):
        return theta_weight(np.asarray(y, dtype=float) / self.B**10, i)

    def phi_iB(self, y, i):
        return np.sqrt(2.0 * self.psi_B(y)) * self.theta_iB(y, i)

    def psi0_B(self, y):
        return psi0(np.asarray(y, dtype=float) / self.B)

    def psi1_B(self, y):
        return psi1(np.asarray(y, dtype=float) / self.B)

    def sigma(self, y):
        return sigma_cutoff(y)

    def chi_B(self, y):
        x = np.asarray(y, dtype=float)
        # int_0^{y} (2/B) psi_{0,B} = 2 (A0(y/B) - A0(0)) with A0 the
        # antiderivative of psi0
        core = 2.0 * (psi0_antiderivative(x / self.B)
                      - psi0_antiderivative(0.0))
        cut = np.where(
            x <= 0.0,
            sigma_cutoff(x / (2.0 * self.B)),
            sigma_cutoff(x / (10.0 * self.B**10)),
        )
        return cut * core

    def Phi(self, y):
        return big_phi(y)


def build_weights(B: float) -> WeightFamily:
    W = WeightFamily(B=float(B))
    # sanity of the scalar shapes behind the family
    total, _ = quad(lambda y: zeta(np.array([y]))[0], -30.0, 30.0, limit=400)
    if abs(total - 1.0) > 1e-8:
        raise NumericalFailureError(f"zeta integral {total} != 1")
    return W


# ---------------------------------------------------------------------------
# derivative sampling and the inequality audit


def _fd_derivatives(f, y: np.ndarray):
    """(f', f'', f''') by 5-point central differences with a step scaled
    to the local magnitude of y, plus per-sample round-off noise floors
    for each derivative order."""
    h = np.maximum(1e-2, 1e-3 * np.abs(y))
    fm2, fm1 = f(y - 2 * h), f(y - h)
    fp1, fp2 = f(y + h), f(y + 2 * h)
    f0 = f(y)
    d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)
    d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h**2)
    d3 = (-fm2 + 2 * fm1 - 2 * fp1 + fp2) / (2 * h**3)
    local = np.max(np.abs(np.stack([fm2, fm1, f0, fp1, fp2])), axis=0)
    noise = (1e-12 * local / h, 1e-12 * local / h**2, 1e-12 * local / h**3)
    return d1, d2, d3, noise


def _sample_grid(B: float) -> np.ndarray:
    near = np.linspace(-10.0 * B, 10.0 * B, 4001)
    far = np.geomspace(10.0 * B, 10.0 * B**10, 400)[1:]
    return np.concatenate([near, far])


def _ratio(lhs: np.ndarray, rhs: np.ndarray, floor=0.0) -> float:
    """max |lhs|/rhs over the samples; samples where |lhs| lies below the
    (per-sample) finite-difference noise floor are treated as zero."""
    lhs = np.abs(np.asarray(lhs, dtype=float))
    keep = lhs > floor
    if not np.any(keep):
        return 0.0
    if np.any(rhs[keep] <= 0.0):
        return float("inf")
    return float(np.max(lhs[keep] / rhs[keep]))


def weight_inequality_audit(W: WeightFamily, n_near: int = 4001) -> dict:
    """Maximal sampled ratios (left/right) of every audited inequality,
    plus the exact constant-1 checks.

    Returns {"exact": {name: bool}, "ratios": {name: float}}."""
    B = W.B
    y = _sample_grid(B)

    psi = W.psi_B(y)
    dpsi, d2psi, d3psi, npsi = _fd_derivatives(W.psi_B, y)
    psi0B = W.psi0_B(y)
    dpsi0, d2psi0, d3psi0, npsi0 = _fd_derivatives(W.psi0_B, y)
    psi1B = W.psi1_B(y)
    chi = W.chi_B(y)
    dchi, d2chi, d3chi, nchi = _fd_derivatives(W.chi_B, y)

    phi = {i: W.phi_iB(y, i) for i in (0, 1, 2)}
    dphi, d2phi, d3phi, nphi = {}, {}, {}, {}
    for i in (0, 1, 2):
        dphi[i], d2phi[i], d3phi[i], nphi[i] = _fd_derivatives(
            lambda v, i=i: W.phi_iB(v, i), y
        )

    tail = y < -B
    exact = {
        "psi_lower_tail": bool(np.all(psi[tail] >= np.exp(2 * y[tail] / B))),
        "psi_upper_tail": bool(
            np.all(psi[tail] <= 2.0 * np.exp(2 * y[tail] / B))
        ),
        "phi_tail_sandwich": bool(
            all(
                np.all(phi[i][tail] >= np.sqrt(0.5) * np.exp(y[tail] / B))
                and np.all(phi[i][tail] <= np.exp(y[tail] / B))
                for i in (0, 1, 2)
            )
        ),
        "psi_le_phi": bool(
            all(np.all(psi <= phi[i] * (1 + 1e-12)) for i in (0, 1, 2))
        ),
        # strict monotonicity / strict bound tested where they are
        # resolvable in floating point (psi_B saturates at 1/2 far right)
        "psi_increasing": bool(
            np.all(dpsi[np.abs(y) <= 10 * B] > 0.0)
            and np.all(np.diff(psi) >= -1e-15)
        ),
        "psi_below_half": bool(
            np.all(psi <= 0.5)
            and np.all(psi[np.abs(y) <= 10 * B] < 0.5)
        ),
        "psi_limit": bool(0.4999 <= float(W.psi_B(10.0 * B)) <= 0.5),
        "theta_monotone": bool(
            all(
                np.all(np.diff(theta_weight(np.linspace(0, 2, 4001), i)) >= -1e-12)
                for i in (0, 1, 2)
            )
        ),
        "zeta_range": bool(
            np.all((zeta(np.linspace(-5, 5, 4001)) > 0.0)
                   & (zeta(np.linspace(-5, 5, 4001)) <= 1.0))
        ),
        "Phi_monotone": bool(
            np.all(np.diff(big_phi(np.linspace(-2, 3, 2001))) >= 0.0)
        ),
    }

    ratios = {
        "psi2_psi3_vs_dpsi": _ratio(
            B ** (2 / 3) * np.abs(d2psi) + B ** (4 / 3) * np.abs(d3psi),
            dpsi,
            floor=B ** (2 / 3) * npsi[1] + B ** (4 / 3) * npsi[2],
        ),
        "sqrt_Bdpsi_vs_Bdphi_psi": max(
            _ratio(np.sqrt(B * np.maximum(dpsi, 0.0)), B * dphi[i] + psi,
                   floor=np.sqrt(B * npsi[0]))
            for i in (1, 2)
        ),
        "y_dpsi_vs_sqrt_psi": _ratio(
            np.abs(y) * dpsi, np.sqrt(psi), floor=np.abs(y) * npsi[0]
        ),
        "sqrt_psi_vs_Bdphi_psi": max(
            _ratio(np.sqrt(psi), B * dphi[i] + psi) for i in (1, 2)
        ),
        "phi2_vs_dphi_psi": max(
            _ratio(
                np.abs(d2phi[i]), B ** (-2 / 3) * dphi[i] + B**-20 * psi,
                floor=nphi[i][1],
            )
            for i in (1, 2)
        ),
        "phi3_vs_dphi_psi": max(
            _ratio(
                np.abs(d3phi[i]), B ** (-4 / 3) * dphi[i] + B**-30 * psi,
                floor=nphi[i][2],
            )
            for i in (1, 2)
        ),
        "Bdphi_psi_vs_phiprev": max(
            _ratio(B * dphi[i] + psi, phi[i - 1], floor=B * nphi[i][0])
            for i in (1, 2)
        ),
        "phiprev_vs_B10dphi_psi": max(
            _ratio(phi[i - 1], B**10 * dphi[i] + psi) for i in (1, 2)
        ),
        "phi_vs_dphi_psi_far": max(
            _ratio(
                phi[i],
                B * dphi[i] + psi
                + np.abs(y) * dphi[i] * (y >= B**10),
            )
            for i in (1, 2)
        ),
        "phi2_vs_dphi_psi0": max(
            _ratio(
                np.abs(d2phi[i]), B ** (-2 / 3) * dphi[i] + B**-20 * psi0B,
                floor=nphi[i][1],
            )
            for i in (1, 2)
        ),
        "chi_derivs_vs_psi0": _ratio(
            B * np.abs(dchi) + B**2 * np.abs(d2chi) + B**3 * np.abs(d3chi),
            psi0B,
            floor=B * nchi[0] + B**2 * nchi[1] + B**3 * nchi[2],
        ),
        "psi0_derivs_vs_psi0": _ratio(
            B * np.abs(dpsi0) + B**2 * np.abs(d2psi0)
            + B**3 * np.abs(d3psi0),
            psi0B,
            floor=B * npsi0[0] + B**2 * npsi0[1] + B**3 * npsi0[2],
        ),
        "chi_vs_min": _ratio(
            np.maximum(chi, 0.0),
            np.minimum(B**9 * psi0B, psi1B * np.sqrt(psi0B)),
        ),
        "dchi_gap_vs_B9dphi": max(
            _ratio(np.abs(dchi - 2.0 / B * psi0B), B**9 * dphi[i],
                   floor=nchi[0])
            for i in (1, 2)
        ),
        "dchi_gap_vs_indicator": _ratio(
            np.abs(dchi - 2.0 / B * psi0B),
            ((y <= -B / 2) | (y >= B**10)).astype(float),
            floor=nchi[0],
        ),
        "chi_gap_vs_indicator": _ratio(
            np.abs(chi - 2.0 * y / B * psi0B),
            ((y <= -B / 2) | (y >= B**10)).astype(float) * np.abs(y),
            # the two sides agree to round-off on the plateau zone
            floor=1e-12 * (np.abs(chi) + np.abs(2.0 * y / B * psi0B)),
        ),
    }

    # near-soliton flatness (le:psiphi iii) on (-B/4, B/4)
    mid = np.abs(y) < B / 4
    lhs = dpsi[mid] + np.abs(psi[mid] - 0.5)
    for i in (1, 2):
        lhs = lhs + dphi[i][mid] + np.abs(phi[i][mid] - 0.5)
    ratios["mid_flatness_vs_expB13"] = float(
        np.max(lhs) / np.exp(-B ** (1 / 3) / 6.0)
    )

    return {"exact": exact, "ratios": ratios}


def audit_stability(reports: dict) -> dict:
    """Across-B stability of each audit ratio.

    A "lesssim" inequality is B-uniform when the sampled ratio does not
    grow with B; a ratio that shrinks means the inequality only gains
    slack.  The reported figure is therefore the growth factor
    max_B ratio / ratio at the smallest B, floored at 1."""
    by_B = sorted(reports.items())
    keys = by_B[0][1]["ratios"].keys()
    out = {}
    for k in keys:
        vals = np.array([rep["ratios"][k] for _, rep in by_B])
        if np.any(~np.isfinite(vals)):
            out[k] = float("inf")
        elif vals[0] <= 0.0:
            out[k] = float("inf") if np.any(vals > 0) else 1.0
        else:
            out[k] = float(max(np.max(vals) / vals[0], 1.0))
    return out


# ---------------------------------------------------------------------------
# sigma profiles and modulation functionals


@dataclass(frozen=True)
class SigmaProfiles:
    sigma1: Field2D
    sigma3: Field2D
    c2: float
    F_norm_sq: float


def _left_cumulative(values: np.ndarray, dx: float, axis: int = 0):
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    x = np.arange(v.shape[0]) * dx
    anti = CubicSpline(x, v, axis=0).antiderivative()
    out = anti(x) - anti(x[0])[np.newaxis]
    return np.moveaxis(out, 0, axis)


def sigma_profiles(Q: Field2D) -> SigmaProfiles:
    """sigma1 = |F|^{-2} int_{-inf}^{y1} LambdaQ, sigma3 = c2^{-1}
    int_{-inf}^{y1} d2 Q, with c2 = 1/2 int (int d2 Q dy1)^2 dy2."""
    box = Q.grid
    X1, X2 = box.meshgrid()
    Q1 = first_difference_4th(Q.values, box.h1, axis=0)
    Q2 = first_difference_4th(Q.values, box.h2, axis=1)
    lamQ = Q.values + X1 * Q1 + X2 * Q2

    cum_lam = _left_cumulative(lamQ, box.h1, axis=0)
    F_row = cum_lam[-1, :]  # int over y1 of LambdaQ, per y2 row
    F_norm_sq = float(np.trapezoid(F_row**2, dx=box.h2))
    if F_norm_sq <= 0:
        raise NumericalFailureError("degenerate F norm in sigma_profiles")

    cum_q2 = _left_cumulative(Q2, box.h1, axis=0)
    G_row = cum_q2[-1, :]
    c2 = 0.5 * float(np.trapezoid(G_row**2, dx=box.h2))
    if c2 <= 0:
        raise NumericalFailureError("degenerate c2 in sigma_profiles")

    return SigmaProfiles(
        sigma1=Field2D(grid=box, values=cum_lam / F_norm_sq),
        sigma3=Field2D(grid=box, values=cum_q2 / c2),
        c2=c2,
        F_norm_sq=F_norm_sq,
    )


@dataclass(frozen=True)
class LyapunovSample:
    N0: float
    N1: float
    N2: float
    J1: float
    Jij: dict
    Fij: dict
    eta: Field2D
    P: float
    Mij: dict
    gamma: float
    eta_residual: float


def _periodic_gradients(values: np.ndarray, h1: float, h2: float):
    n1, n2 = values.shape
    xi1 = 2.0 * np.pi * np.fft.fftfreq(n1, d=h1)[:, None]
    xi2 = 2.0 * np.pi * np.fft.rfftfreq(n2, d=h2)[None, :]
    vhat = np.fft.rfft2(values)
    d1 = np.fft.irfft2(1j * xi1 * vhat, s=values.shape)
    d2 = np.fft.irfft2(1j * xi2 * vhat, s=values.shape)
    return d1, d2, xi1, xi2, vhat


def compute_sample(
    eps: Field2D,
    lam: float,
    b: float,
    Qb: Field2D,
    W: WeightFamily,
    theta: float,
    sigma: SigmaProfiles | None = None,
) -> LyapunovSample:
    """Evaluate the Lyapunov diagnostics on one decomposed state.

    The fields live on a box grid which is treated as one period for the
    spectral eta solve (the duplicated end samples are dropped)."""
    box = eps.grid
    if Qb.grid is not box and Qb.values.shape != eps.values.shape:
        raise InvalidInputError("eps and Qb must share a grid")
    B = W.B
    gamma = B**-3

    e = eps.values[:-1, :-1]
    q = Qb.values[:-1, :-1]
    w = box.h1 * box.h2
    y1 = box.x1[:-1]

    psi = W.psi_B(y1)[:, None]
    phi = {i: W.phi_iB(y1, i)[:, None] for i in (0, 1, 2)}
    chi = W.chi_B(y1)[:, None]

    de1, de2, xi1, xi2, ehat = _periodic_gradients(e, box.h1, box.h2)
    grad_sq = de1**2 + de2**2

    if sigma is not None:
        s1 = sigma.sigma1.values[:-1, :-1]
        J1 = w * float(np.sum(e * s1))
    else:
        J1 = 0.0
    if J1 >= 1.0:
        raise InvalidInputError(f"J1 = {J1} >= 1; Jij are undefined")

    N = {
        i: w * float(np.sum(grad_sq * psi + e**2 * phi[i]))
        for i in (0, 1, 2)
    }

    Jij = {
        (i, j): (1.0 - J1) ** (-2.0 * theta * (j - 1) - 2.0 * i - 12.0) - 1.0
        for i in (1, 2)
        for j in (1, 2)
    }

    quartic = (q + e) ** 4 - q**4 - 4.0 * q**3 * e
    Fij = {
        (i, j): w
        * float(
            np.sum(
                grad_sq * psi
                + (1.0 + Jij[(i, j)]) * e**2 * phi[i]
                - 0.5 * psi * quartic
            )
        )
        for i in (1, 2)
        for j in (1, 2)
    }

    # eta = (1 - gamma Delta)^{-1} L eps, solved spectrally
    Leps = (
        -np.fft.irfft2(-(xi1**2 + xi2**2) * ehat, s=e.shape)
        + e
        - 3.0 * q**2 * e
    )
    lhat = np.fft.rfft2(Leps)
    mult = 1.0 + gamma * (xi1**2 + xi2**2)
    eta = np.fft.irfft2(lhat / mult, s=e.shape)
    back = np.fft.irfft2(mult * np.fft.rfft2(eta), s=e.shape)
    nrm = np.sqrt(np.sum(Leps**2))
    eta_residual = (
        float(np.sqrt(np.sum((back - Leps) ** 2)) / nrm) if nrm > 0 else 0.0
    )

    P = w * float(np.sum(eta**2 * chi))
    Mij = {k: Fij[k] + B**-20 * P for k in Fij}

    eta_full = np.pad(eta, ((0, 1), (0, 1)), mode="wrap")
    return LyapunovSample(
        N0=N[0], N1=N[1], N2=N[2], J1=J1, Jij=Jij, Fij=Fij,
        eta=Field2D(grid=box, values=eta_full),
        P=P, Mij=Mij, gamma=gamma, eta_residual=eta_residual,
    )


SERIES_COLUMNS = [
    "t", "N0", "N1", "N2", "J1", "F11", "F12", "F21", "F22", "P",
    "M11", "M12", "M21", "M22", "lambda", "b",
]


def lyapunov_series(run_output, W: WeightFamily, theta: float,
                    Qb_of_b=None) -> dict:
    """Lyapunov diagnostics along a simulator run.

    `run_output` must carry decomposition snapshots with epsilon fields
    (simulator.RunResult with snapshots).  `Qb_of_b` maps b to a Q_b field
    on the modulation box; it is required to evaluate F_ij."""
    snaps = getattr(run_output, "snapshots", None)
    if not snaps:
        raise InvalidInputError("run output carries no decomposition snapshots")
    if Qb_of_b is None:
        raise InvalidInputError("lyapunov_series requires Qb_of_b")

    rows = {k: [] for k in SERIES_COLUMNS}
    sigma = None

    def as_field(q, grid):
        return q if isinstance(q, Field2D) else Field2D(grid=grid, values=q)

    for t, m in snaps:
        if m.epsilon is None:
            continue
        grid = m.epsilon.grid
        Qb = as_field(Qb_of_b(m.b), grid)
        if sigma is None:
            sigma = sigma_profiles(as_field(Qb_of_b(0.0), grid))
        s = compute_sample(m.epsilon, m.lam, m.b, Qb, W, theta, sigma=sigma)
        rows["t"].append(t)
        rows["N0"].append(s.N0)
        rows["N1"].append(s.N1)
        rows["N2"].append(s.N2)
        rows["J1"].append(s.J1)
        for i in (1, 2):
            for j in (1, 2):
                rows[f"F{i}{j}"].append(s.Fij[(i, j)])
                rows[f"M{i}{j}"].append(s.Mij[(i, j)])
        rows["P"].append(s.P)
        rows["lambda"].append(m.lam)
        rows["b"].append(m.b)

    out = {k: np.array(v) for k, v in rows.items()}
    # monotonicity monitor on the rescaled M_ij
    lam = out["lambda"]
    monitor = {}
    for i in (1, 2):
        for j in (1, 2):
            resc = out[f"M{i}{j}"] / lam ** (theta * (j - 1))
            d = np.diff(resc)
            monitor[f"M{i}{j}_fraction_nonincreasing"] = (
                float(np.mean(d <= 1e-12 + 1e-6 * np.abs(resc[:-1])))
                if len(d) else float("nan")
            )
    out["monitor"] = monitor
    return out


def save_series(path: str, series: dict) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SERIES_COLUMNS)
        for row in zip(*(series[k] for k in SERIES_COLUMNS)):
            writer.writerow([f"{v:.12g}" for v in row])
