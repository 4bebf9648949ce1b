"""Derived profiles of the ground state: LambdaQ, F, Fhat, h2, theta/beta,
the non-localized profile P and the localized pair (Q_b, Psi_b).

The theta pipeline: central differences for LambdaQ, cubic interpolation of
the radial profile onto a square grid of the same spacing, row sums for F,
an evenness symmetrization, and an FFT scaled to the unitary continuum
convention

    fhat(xi) = (2*pi)^{-1/2} * integral f(y) e^{-i y xi} dy.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    DegenerateProfileError,
    InvalidInputError,
    NumericalFailureError,
    OutOfRegimeError,
)
from .grids import BoxGrid2D, Field2D, RadialGrid, RadialProfile
from . import groundstate


@dataclass(frozen=True)
class Profile1D:
    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.shape != v.shape or x.ndim != 1:
            raise InvalidInputError("profile arrays must be equal-length 1D")
        d = np.diff(x)
        if not np.allclose(d, d[0], rtol=1e-12, atol=0.0):
            raise InvalidInputError("profile grid must be uniform")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])


@dataclass(frozen=True)
class SpectralProfile1D:
    xi: np.ndarray
    values: np.ndarray

    @property
    def dxi(self) -> float:
        return float(self.xi[1] - self.xi[0])


@dataclass(frozen=True)
class ThetaResult:
    I0: float
    I1: float

    @property
    def theta(self) -> float:
        return 2.0 * self.I1 / self.I0

    @property
    def beta(self) -> float:
        return 1.0 / (3.0 - self.theta)


def central_differences(v: np.ndarray) -> np.ndarray:
    """Grid-index differences: centered inside, one-sided at the ends."""
    out = np.empty_like(v)
    out[1:-1] = 0.5 * (v[2:] - v[:-2])
    out[0] = v[1] - v[0]
    out[-1] = v[-1] - v[-2]
    return out


def lambda_q(Q):
    """Scaling derivative LambdaQ = Q + y.grad(Q) (radial: Q + r Q_r)."""
    if isinstance(Q, RadialProfile):
        dv = central_differences(Q.values) / Q.grid.dr
        return RadialProfile(grid=Q.grid, values=Q.values + Q.grid.r * dv)
    if isinstance(Q, Field2D):
        g = Q.grid
        d1 = central_differences_2d(Q.values, axis=0) / g.h1
        d2 = central_differences_2d(Q.values, axis=1) / g.h2
        X1, X2 = g.meshgrid()
        return Field2D(grid=g, values=Q.values + X1 * d1 + X2 * d2)
    raise InvalidInputError(f"lambda_q cannot handle {type(Q)!r}")


def central_differences_2d(v: np.ndarray, axis: int) -> np.ndarray:
    return np.apply_along_axis(central_differences, axis, v)


def symmetric_axis(grid: RadialGrid) -> np.ndarray:
    """The square-grid axis [-rmax, rmax] with the radial spacing (2n-1 points)."""
    m = grid.n
    return np.arange(1 - m, m) * grid.dr


def compute_F(lambdaQ: RadialProfile, record: dict | None = None) -> Profile1D:
    """F(y2) = integral of LambdaQ(y1, y2) dy1 on the square grid.

    Row sums with weight dr, then the evenness symmetrization
    (g + reverse(g))/2; the pre/post difference is recorded if a dict is
    passed (the symmetrization should be a no-op up to round-off)."""
    grid = lambdaQ.grid
    axis = symmetric_axis(grid)
    interp = groundstate.radial_interpolator(lambdaQ)
    rho = np.hypot(axis[:, None], axis[None, :])
    vals = interp(rho)
    g = np.sum(vals, axis=0) * grid.dr
    g_sym = 0.5 * (g + g[::-1])
    if record is not None:
        record["symmetrization_diff"] = float(np.max(np.abs(g - g_sym)))
    return Profile1D(x=axis, values=g_sym)


def fourier_1d(f: Profile1D) -> SpectralProfile1D:
    """Unitary transform on a centered grid (fftshift convention)."""
    n = len(f.x)
    if n < 8:
        raise InvalidInputError("need at least 8 samples for the transform")
    if not np.allclose(f.x, -f.x[::-1], rtol=0, atol=1e-9 * abs(f.x[-1])):
        raise InvalidInputError("transform expects a symmetric centered grid")
    dx = f.dx
    dxi = 2.0 * np.pi / (n * dx)
    xi = (np.arange(n) - n // 2) * dxi
    vals = dx / np.sqrt(2.0 * np.pi) * np.fft.fftshift(
        np.fft.fft(np.fft.ifftshift(f.values))
    )
    return SpectralProfile1D(xi=xi, values=vals)


def inverse_fourier_1d(fhat: SpectralProfile1D) -> Profile1D:
    n = len(fhat.xi)
    dxi = fhat.dxi
    dx = 2.0 * np.pi / (n * dxi)
    x = (np.arange(n) - n // 2) * dx
    vals = np.sqrt(2.0 * np.pi) / dx * np.fft.fftshift(
        np.fft.ifft(np.fft.ifftshift(fhat.values))
    )
    return Profile1D(x=x, values=np.real(vals))


def compute_theta(Fhat: SpectralProfile1D) -> ThetaResult:
    mag2 = np.abs(Fhat.values) ** 2
    I0 = float(np.trapezoid(mag2, dx=Fhat.dxi))
    if I0 == 0.0:
        raise DegenerateProfileError("F-hat is identically zero")
    I1 = float(np.trapezoid(mag2 / (1.0 + Fhat.xi**2), dx=Fhat.dxi))
    return ThetaResult(I0=I0, I1=I1)


def compute_h2(F: Profile1D) -> tuple[Profile1D, float]:
    """Solve -h2'' + h2 = F'' spectrally: h2hat = -xi^2 Fhat/(1+xi^2).

    Returns (h2, relative residual of the ODE evaluated with spectral
    derivatives)."""
    Fhat = fourier_1d(F)
    xi2 = Fhat.xi**2
    h2hat = SpectralProfile1D(xi=Fhat.xi, values=-xi2 * Fhat.values / (1.0 + xi2))
    h2 = inverse_fourier_1d(h2hat)
    # residual -h2'' + h2 - F'' with spectral second derivatives
    h2pp = inverse_fourier_1d(
        SpectralProfile1D(xi=Fhat.xi, values=-xi2 * h2hat.values)
    ).values
    Fpp = inverse_fourier_1d(
        SpectralProfile1D(xi=Fhat.xi, values=-xi2 * Fhat.values)
    ).values
    res = -h2pp + h2.values - Fpp
    rel = float(np.linalg.norm(res) / np.linalg.norm(Fpp))
    return h2, rel


def second_derivative_spectral(f: Profile1D) -> Profile1D:
    fhat = fourier_1d(f)
    return inverse_fourier_1d(
        SpectralProfile1D(xi=fhat.xi, values=-(fhat.xi**2) * fhat.values)
    )


# ---------------------------------------------------------------------------
# theta pipeline and the (dr, L) sweep table

def theta_pipeline(dr: float, L: float, taylor_rows: int | None = None) -> dict:
    """Full pipeline Q -> LambdaQ -> F -> Fhat -> theta at (dr, rmax=L)."""
    grid = RadialGrid.from_rmax(dr, L)
    report = groundstate.solve_ground_state(grid=grid, taylor_rows=taylor_rows)
    lam = lambda_q(report.Q)
    record: dict = {}
    F = compute_F(lam, record=record)
    Fhat = fourier_1d(F)
    theta = compute_theta(Fhat)
    return {
        "ground_state": report,
        "lambdaQ": lam,
        "F": F,
        "Fhat": Fhat,
        "theta": theta,
        "symmetrization_diff": record["symmetrization_diff"],
    }


def theta_table(dr_list, L_list, taylor_rows: int | None = None) -> list[dict]:
    """One row per (dr, L) cell; failures are recorded in-cell."""
    rows = []
    for dr in dr_list:
        for L in L_list:
            row = {"dr": dr, "L": L, "theta": None, "error": None}
            try:
                row["theta"] = theta_pipeline(dr, L, taylor_rows)["theta"].theta
            except Exception as exc:  # noqa: BLE001 - sweep keeps going
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def save_theta_table(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dr", "L", "theta"])
        for row in rows:
            theta = "" if row["theta"] is None else repr(row["theta"])
            writer.writerow([repr(row["dr"]), repr(row["L"]), theta])


def save_theta_result(theta: ThetaResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(
            {"I0": theta.I0, "I1": theta.I1, "theta": theta.theta, "beta": theta.beta},
            fh,
            indent=2,
        )


def save_profiles_csv(F: Profile1D, h2: Profile1D, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y2", "F", "h2"])
        for y, a, b in zip(F.x, F.values, h2.values):
            writer.writerow([repr(float(y)), repr(float(a)), repr(float(b))])


def save_fhat_csv(Fhat: SpectralProfile1D, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["xi", "Fhat_re"])
        for x, v in zip(Fhat.xi, Fhat.values):
            writer.writerow([repr(float(x)), repr(float(np.real(v)))])


# ---------------------------------------------------------------------------
# the non-localized profile P

@dataclass(frozen=True)
class PProfile:
    field: Field2D
    auxiliary: Field2D
    h1: Profile1D
    diagnostics: dict


def radial_chain_fields(prof: RadialProfile, box: BoxGrid2D):
    """(f, df/dy1, df/dy2, d2f/dy2^2) of a radial profile on a box grid."""
    sp = CubicSpline(prof.grid.r, prof.values)
    X1, X2 = box.meshgrid()
    rho = np.hypot(X1, X2)
    inside = rho <= prof.grid.rmax
    rho_safe = np.where(rho > 0, rho, 1.0)
    f = np.where(inside, sp(rho), 0.0)
    d1r = np.where(inside, sp.derivative()(rho), 0.0)
    d2r = np.where(inside, sp.derivative(2)(rho), 0.0)
    f1 = d1r * X1 / rho_safe
    f2 = d1r * X2 / rho_safe
    # second y2-derivative: f'' (y2/rho)^2 + f' y1^2/rho^3, with the radial
    # limit f''(0) at the origin
    f22 = d2r * (X2 / rho_safe) ** 2 + d1r * X1**2 / rho_safe**3
    at0 = rho == 0.0
    f1[at0] = 0.0
    f2[at0] = 0.0
    f22[at0] = d2r[at0]
    return f, f1, f2, f22


def cumulative_tail(values: np.ndarray, dx: float, axis: int = 0) -> np.ndarray:
    """Integral from each sample to the right end of the axis.

    Uses the exact antiderivative of the cubic spline through the samples,
    so the result differentiates back to the integrand to fourth order."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    x = np.arange(v.shape[0]) * dx
    anti = CubicSpline(x, v, axis=0).antiderivative()
    tail = anti(x[-1])[np.newaxis] - anti(x)
    return np.moveaxis(tail, 0, axis)


def _radial_negative_mode(Q: RadialProfile) -> tuple[float, RadialProfile]:
    """Lowest eigenpair of the radial restriction of L = -Delta + 1 - 3Q^2.

    Returns (mu0, Y) with L Y = -mu0 Y and 2D normalization (Y, Y) = 1."""
    from scipy.linalg import eig_banded

    grid = Q.grid
    n, dr = grid.n, grid.dr
    r = grid.r
    # operator -f'' - f'/r + (1 - 3Q^2) f; symmetrize with u = sqrt(r) f away
    # from the origin.  The origin row is handled by solving on r >= dr with a
    # Neumann-like closure: f(0) eliminated via the reflecting stencil.
    # Simpler and robust here: plain non-symmetric FD matrix + dense solve on
    # the banded symmetrized form via similarity scaling.
    sub = np.zeros(n - 1)
    sup = np.zeros(n - 1)
    diag = np.zeros(n)
    diag[:] = 2.0 / dr**2 + 1.0 - 3.0 * Q.values**2
    # origin row: lim_{r->0} (f'' + f'/r) = 2 f''(0) with even reflection
    diag[0] = 4.0 / dr**2 + 1.0 - 3.0 * Q.values[0] ** 2
    sup[0] = -4.0 / dr**2
    sup[1:] = -1.0 / dr**2 - 1.0 / (2.0 * dr * r[1:-1])
    sub[:-1] = -1.0 / dr**2 + 1.0 / (2.0 * dr * r[1:-1])
    sub[-1] = -1.0 / dr**2 + 1.0 / (2.0 * dr * r[-1])
    # similarity scaling D A D^-1 with D_k chosen so off-diagonals match
    prod = sup * sub
    if np.any(prod <= 0):
        raise NumericalFailureError("radial eigenproblem lost symmetrizability")
    off = -np.sqrt(prod)
    bands = np.vstack([diag, np.append(off, 0.0)])
    w, v = eig_banded(bands, lower=True, select="i", select_range=(0, 2))
    # undo the similarity scaling: D_k = prod of sqrt(sup/sub) factors
    scale = np.ones(n)
    ratio = np.sqrt(np.abs(sup / sub))
    scale[1:] = np.cumprod(ratio)
    y = v[:, 0] / scale
    y *= np.sign(y[0])
    Yprof = RadialProfile(grid=grid, values=y)
    norm = np.sqrt(groundstate.radial_mass(Yprof))
    Yprof = RadialProfile(grid=grid, values=y / norm)
    mu0 = -float(w[0])
    if mu0 <= 0:
        raise NumericalFailureError("no negative eigenvalue found for L")
    return mu0, Yprof


def second_difference_matrix(n: int, h: float):
    """Sparse fourth-order second-difference matrix with Dirichlet truncation.

    Stencil (-1, 16, -30, 16, -1)/(12 h^2); values beyond the box are taken
    as zero, which is accurate here because every field involved decays fast."""
    import scipy.sparse as sp

    c = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h**2)
    return sp.diags(
        [c[0] * np.ones(n - 2), c[1] * np.ones(n - 1), c[2] * np.ones(n),
         c[3] * np.ones(n - 1), c[4] * np.ones(n - 2)],
        [-2, -1, 0, 1, 2],
    )


def first_difference_4th(f: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Fourth-order central first derivative, zero padding beyond the ends."""
    v = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    p = np.concatenate([np.zeros((2,) + v.shape[1:]), v, np.zeros((2,) + v.shape[1:])])
    out = (-p[4:] + 8.0 * p[3:-1] - 8.0 * p[1:-3] + p[:-4]) / (12.0 * h)
    return np.moveaxis(out, 0, axis)


def assemble_L_sparse(Qsq: np.ndarray, box: BoxGrid2D):
    """Sparse fourth-order L = -Delta + 1 - 3Q^2 with Dirichlet truncation."""
    import scipy.sparse as sp

    n1, n2 = Qsq.shape
    D1 = second_difference_matrix(n1, box.h1)
    D2 = second_difference_matrix(n2, box.h2)
    lap = sp.kron(D1, sp.eye(n2)) + sp.kron(sp.eye(n1), D2)
    pot = sp.diags(1.0 - 3.0 * Qsq.ravel())
    return (-lap + pot).tocsr()


def solve_P(
    Q: RadialProfile,
    h2: Profile1D,
    box: BoxGrid2D,
    F: Profile1D | None = None,
    tol: float = 1e-10,
) -> PProfile:
    """Construct P = Ptilde - tail(LambdaQ) - h2 (x) tail(h1) on the box.

    Ptilde solves L Ptilde = R with the source R of the construction lemma;
    the solve runs in the orthogonal complement of the discrete kernel
    directions (d1 Q, d2 Q) and of the negative mode Y, whose component is
    restored analytically through the eigenvalue."""
    from scipy.sparse.linalg import LinearOperator, eigsh, minres

    lamQ = lambda_q_spline(Q)
    if F is None:
        F = compute_F(lamQ)
    x1, x2 = box.x1, box.x2
    h1ax, h2ax = box.h1, box.h2

    Qf, Q1, Q2, _ = radial_chain_fields(Q, box)
    lam, _, _, _ = radial_chain_fields(lamQ, box)

    h2_on = np.interp(x2, h2.x, h2.values, left=0.0, right=0.0)

    # h1: two-constraint correction of a normalized Gaussian
    G_row = np.array(
        [np.trapezoid(h2_on * Qf[i, :], dx=h2ax) for i in range(len(x1))]
    )
    h1_vals, h1_info = _build_h1(x1, G_row)

    tail_lam = cumulative_tail(lam, h1ax, axis=0)
    tail_h1 = cumulative_tail(h1_vals, h1ax)

    Qsq = Qf**2
    L = assemble_L_sparse(Qsq, box)

    # Source for the auxiliary solve.  P = Ptilde - W with the explicit
    # correction W = tail(LambdaQ) + h2 (x) tail(h1), and P must satisfy
    # L P = -tail(LambdaQ); hence L Ptilde = L W - tail(LambdaQ).  Applying
    # the *discrete* operator to W keeps source and solve consistent to the
    # stencil order.
    W = tail_lam + h2_on[None, :] * tail_h1[:, None]
    R = (L @ W.ravel()).reshape(W.shape) - tail_lam

    # negative mode of the *discrete* 2D operator, so that the eigenvalue
    # restoration below is consistent with the solve; the radial eigenpair
    # seeds the shift and the starting vector
    mu0_rad, Yrad = _radial_negative_mode(Q)
    v0 = groundstate.radial_interpolator(Yrad)(np.hypot(*box.meshgrid()))
    wY, vY = eigsh(L, k=1, sigma=-mu0_rad - 1.0, which="LM", v0=v0.ravel())
    mu0 = -float(wY[0])
    if mu0 <= 0:
        raise NumericalFailureError("2D eigensolve lost the negative mode")
    Yf = vY[:, 0].reshape(Qf.shape)
    Yf *= np.sign(float(Yf.ravel() @ v0.ravel())) / np.sqrt(box.inner(Yf, Yf))

    w = h1ax * h2ax  # uniform quadrature weight for discrete pairings
    basis = []
    for vec in (Q1, Q2, Yf):
        v = vec.ravel().copy()
        for b in basis:
            v -= (b @ v) * b
        nrm = np.linalg.norm(v)
        if nrm < 1e-12:
            raise NumericalFailureError("degenerate projection basis in solve_P")
        basis.append(v / nrm)
    basis = np.array(basis)

    def project(v):
        return v - basis.T @ (basis @ v)

    def matvec(v):
        return project(L @ project(v))

    nn = L.shape[0]
    rhs = project(R.ravel())
    op = LinearOperator((nn, nn), matvec=matvec, dtype=float)
    sol, info = minres(op, rhs, rtol=tol, maxiter=20000)
    if info != 0:
        raise NumericalFailureError(f"minres did not converge (info={info})")
    a_Y = w * float(Yf.ravel() @ R.ravel())
    Ptilde = project(sol).reshape(Qf.shape) - (a_Y / mu0) * Yf

    P = Ptilde - W

    diagnostics = _p_diagnostics(P, Ptilde, Qf, lam, F, L, box, h1_info)
    return PProfile(
        field=Field2D(grid=box, values=P),
        auxiliary=Field2D(grid=box, values=Ptilde),
        h1=Profile1D(x=x1, values=h1_vals),
        diagnostics=diagnostics,
    )


def lambda_q_spline(Q: RadialProfile) -> RadialProfile:
    """LambdaQ with spline derivatives (used off the table-reproduction path)."""
    d = CubicSpline(Q.grid.r, Q.values).derivative()(Q.grid.r)
    return RadialProfile(grid=Q.grid, values=Q.values + Q.grid.r * d)


def _build_h1(x1: np.ndarray, G_row: np.ndarray, center: float = 0.0):
    """h1 = a*gauss + b*G with integral 1 and (h1, G) = 0."""
    dx = float(x1[1] - x1[0])
    for shift in (center, 0.5, -0.5, 1.0):
        g = np.exp(-((x1 - shift) ** 2)) / np.sqrt(np.pi)
        A = np.array(
            [
                [np.trapezoid(g, dx=dx), np.trapezoid(G_row, dx=dx)],
                [np.trapezoid(g * G_row, dx=dx), np.trapezoid(G_row**2, dx=dx)],
            ]
        )
        det = np.linalg.det(A)
        if abs(det) > 1e-12 * max(1.0, abs(A[0, 0] * A[1, 1])):
            coeff = np.linalg.solve(A, np.array([1.0, 0.0]))
            h1 = coeff[0] * g + coeff[1] * G_row
            info = {"gauss_center": shift, "coefficients": coeff.tolist()}
            return h1, info
    raise NumericalFailureError("h1 construction degenerate for all shifts")


def _p_diagnostics(P, Ptilde, Qf, lam, F, L, box, h1_info) -> dict:
    n1, n2 = P.shape
    PQ = box.inner(P, Qf)
    quarter_F2 = 0.25 * float(np.trapezoid(F.values**2, dx=F.dx))
    dP1 = first_difference_4th(P, box.h1, axis=0)
    dP2 = first_difference_4th(P, box.h2, axis=1)
    grad_pair = np.hypot(box.inner(dP1, Qf), box.inner(dP2, Qf))
    Qnorm2 = box.inner(Qf, Qf)

    LP = (L @ P.ravel()).reshape(P.shape)
    d1LP = first_difference_4th(LP, box.h1, axis=0)
    res = d1LP - lam
    i1 = slice(n1 // 4, 3 * n1 // 4)
    i2 = slice(n2 // 4, 3 * n2 // 4)
    rel_res = float(
        np.linalg.norm(res[i1, i2]) / np.linalg.norm(lam[i1, i2])
    )
    return {
        "PQ": PQ,
        "quarter_F2": quarter_F2,
        "PQ_gap": abs(PQ - quarter_F2) / abs(quarter_F2),
        "gradP_Q": float(grad_pair),
        "gradP_Q_rel": float(grad_pair / Qnorm2),
        "residual_inner_rel": rel_res,
        "h1": h1_info,
    }


# the localized approximate blow-up profile Q_b

B_STAR = 0.2


@dataclass(frozen=True)
class LocalizedProfile:
    b: float
    Qb: Field2D
    Psib: Field2D
    phi_b: np.ndarray
    pairings: dict


def smoothstep(t: np.ndarray) -> np.ndarray:
    """C^2 quintic smoothstep: 0 at t<=0, 1 at t>=1, monotone in between."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def cutoff_phi(s: np.ndarray) -> np.ndarray:
    """Monotone C^2 cutoff: 0 for s <= -2, 1 for s >= -1."""
    return smoothstep(np.asarray(s, dtype=float) + 2.0)


def second_difference_4th(f: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Fourth-order central second derivative, zero padding beyond the ends."""
    v = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    p = np.concatenate([np.zeros((2,) + v.shape[1:]), v, np.zeros((2,) + v.shape[1:])])
    out = (
        -p[4:] + 16.0 * p[3:-1] - 30.0 * p[2:-2] + 16.0 * p[1:-3] - p[:-4]
    ) / (12.0 * h**2)
    return np.moveaxis(out, 0, axis)


def build_localized(
    Q: RadialProfile, P: PProfile, b: float, b_star: float = B_STAR
) -> LocalizedProfile:
    """Q_b = Q + b P phi_b and its generator error Psi_b, on the box of P.

    Psi_b = -b Lambda(Q_b) + d_y1(-Delta Q_b + Q_b - Q_b^3), all derivatives
    by fourth-order central differences."""
    if abs(b) > b_star:
        raise OutOfRegimeError(f"|b|={abs(b)} exceeds the validity regime b*={b_star}")
    box = P.field.grid
    Qf, _, _, _ = radial_chain_fields(Q, box)
    if b == 0.0:
        phi_row = np.ones_like(box.x1)
    else:
        phi_row = cutoff_phi(abs(b) ** 0.75 * box.x1)
    Qb = Qf + b * P.field.values * phi_row[:, None]

    X1, X2 = box.meshgrid()
    d1 = first_difference_4th(Qb, box.h1, axis=0)
    d2 = first_difference_4th(Qb, box.h2, axis=1)
    lap = second_difference_4th(Qb, box.h1, axis=0) + second_difference_4th(
        Qb, box.h2, axis=1
    )
    lam_Qb = Qb + X1 * d1 + X2 * d2
    Psib = -b * lam_Qb + first_difference_4th(-lap + Qb - Qb**3, box.h1, axis=0)

    grad_sq = box.integrate(d1**2 + d2**2)
    pairings = {
        "psi_Q": box.inner(Psib, Qf),
        "energy": 0.5 * grad_sq - 0.25 * box.integrate(Qb**4),
        "mass": box.integrate(Qb**2),
        "psi_norm": float(np.sqrt(box.integrate(Psib**2))),
    }
    return LocalizedProfile(
        b=b,
        Qb=Field2D(grid=box, values=Qb),
        Psib=Field2D(grid=box, values=Psib),
        phi_b=phi_row,
        pairings=pairings,
    )


def theta_cross_check(P: PProfile, psib_pairings: dict[float, float]) -> dict:
    """theta from the pairing route: (Psi_b, Q) = -theta b^2 (P, Q) + O(b^3).

    psib_pairings maps b -> (Psi_b, Q).  The quotient -(Psi_b,Q)/(b^2 (P,Q))
    is extrapolated to b -> 0 by fitting a polynomial in b of degree
    len(pairings)-1 (Richardson elimination of the O(b) remainder)."""
    if len(psib_pairings) < 2:
        raise InvalidInputError("theta_cross_check needs at least two b values")
    bs = np.array(sorted(psib_pairings, key=abs, reverse=True), dtype=float)
    if np.any(bs == 0.0):
        raise InvalidInputError("b = 0 carries no pairing information")
    PQ = P.diagnostics["PQ"]
    g = np.array([-psib_pairings[b] / (b**2 * PQ) for b in bs])
    coeff = np.polynomial.polynomial.polyfit(bs, g, deg=len(bs) - 1)
    theta_alt = float(coeff[0])
    return {
        "theta_alt": theta_alt,
        "quotients": {float(b): float(v) for b, v in zip(bs, g)},
        "PQ": PQ,
    }
