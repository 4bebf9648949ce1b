"""Discrete linearized operator L and the virial operators A and B.

All three act on fields over a Dirichlet-truncated box:

    L f = -Delta f + f - 3 Q^2 f
    B f = -(3/2) d1^2 f - (1/2) d2^2 f + f/2 - ((3/2) Q^2 + 3 y1 Q d1Q) f
    A f = B f + 3 (f, y1 Q)/(Q,Q) Q^2 d1Q + 3 (f, Q^2 d1Q)/(Q,Q) y1 Q

Derivatives use fourth-order central stencils with zero padding (every
relevant field decays exponentially).  The module verifies the spectral
facts the analysis relies on: a unique negative eigenvalue -mu0 of L, a
two-dimensional near-kernel, and strictly positive constrained Rayleigh
minima measured against the H^1 norm.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .errors import InvalidConstraintsError, InvalidInputError, NumericalFailureError
from .grids import BoxGrid2D, Field2D, RadialProfile
from .profiles import radial_chain_fields, second_difference_matrix


@dataclass(frozen=True)
class SymmetricOperator2D:
    """Sparse local part plus optional symmetric rank-2 corrections.

    Each rank-2 term (left, right, coeff) contributes
    coeff * (f, left)_{L^2} * right to the action; terms come in symmetric
    pairs so that (Af, g) = (f, Ag)."""

    grid: BoxGrid2D
    matrix: sp.spmatrix
    rank2_terms: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def weight(self) -> float:
        """Quadrature weight of the uniform L^2 pairing."""
        return self.grid.h1 * self.grid.h2

    def apply(self, f: np.ndarray) -> np.ndarray:
        v = np.asarray(f, dtype=float).ravel()
        out = self.matrix @ v
        for left, right, coeff in self.rank2_terms:
            out = out + coeff * self.weight * (left @ v) * right
        return out

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.n, self.n), matvec=self.apply, dtype=float)


@dataclass(frozen=True)
class EigenReport:
    lowest_eigenvalues: list
    mu0: float
    Y: Field2D
    kernel_gap: float
    constrained_minima: dict


def _q_fields(Q, box: BoxGrid2D):
    """(Q, d1Q) on the box from a radial profile or a sampled field."""
    if isinstance(Q, RadialProfile):
        Qf, Q1, _, _ = radial_chain_fields(Q, box)
        return Qf, Q1
    if isinstance(Q, Field2D):
        from .profiles import first_difference_4th

        return Q.values, first_difference_4th(Q.values, box.h1, axis=0)
    raise InvalidInputError(f"cannot extract Q fields from {type(Q)!r}")


def _second_derivative_pair(box: BoxGrid2D):
    n1, n2 = box.shape
    D1 = second_difference_matrix(n1, box.h1)
    D2 = second_difference_matrix(n2, box.h2)
    return (
        sp.kron(D1, sp.eye(n2)).tocsr(),
        sp.kron(sp.eye(n1), D2).tocsr(),
    )


def assemble_L(Q, box: BoxGrid2D) -> SymmetricOperator2D:
    """L = -Delta + 1 - 3Q^2."""
    Qf, _ = _q_fields(Q, box)
    D11, D22 = _second_derivative_pair(box)
    pot = sp.diags(1.0 - 3.0 * Qf.ravel() ** 2)
    return SymmetricOperator2D(grid=box, matrix=(-D11 - D22 + pot).tocsr())


def _b_matrix(Qf: np.ndarray, Q1: np.ndarray, box: BoxGrid2D) -> sp.spmatrix:
    D11, D22 = _second_derivative_pair(box)
    X1, _ = box.meshgrid()
    pot = 0.5 - 1.5 * Qf**2 + 3.0 * X1 * Qf * Q1
    return (-1.5 * D11 - 0.5 * D22 + sp.diags(pot.ravel())).tocsr()


def assemble_B(Q, box: BoxGrid2D) -> SymmetricOperator2D:
    """B = -(3/2) d1^2 - (1/2) d2^2 + 1/2 - (3/2)Q^2 + 3 y1 Q d1Q."""
    Qf, Q1 = _q_fields(Q, box)
    return SymmetricOperator2D(grid=box, matrix=_b_matrix(Qf, Q1, box))


def assemble_A(Q, box: BoxGrid2D) -> SymmetricOperator2D:
    """A = B plus the symmetric pair of rank-2 nonlocal corrections."""
    Qf, Q1 = _q_fields(Q, box)
    X1, _ = box.meshgrid()
    u = (X1 * Qf).ravel()
    v = (Qf**2 * Q1).ravel()
    coeff = 3.0 / box.inner(Qf, Qf)
    return SymmetricOperator2D(
        grid=box,
        matrix=_b_matrix(Qf, Q1, box),
        rank2_terms=[(u, v, coeff), (v, u, coeff)],
    )


def h1_gram(box: BoxGrid2D) -> sp.spmatrix:
    """Discrete H^1 Gram operator -Delta + 1 (fourth-order stencil)."""
    D11, D22 = _second_derivative_pair(box)
    return (-D11 - D22 + sp.eye(D11.shape[0])).tocsr()


def lowest_spectrum(op: SymmetricOperator2D, k: int = 6, sigma: float = -15.0,
                    tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """k smallest eigenpairs by shift-invert from below the spectrum bottom."""
    if k < 3:
        raise InvalidInputError("lowest_spectrum needs k >= 3")
    if op.rank2_terms:
        raise InvalidInputError(
            "shift-invert path only supports purely local operators"
        )
    try:
        w, v = eigsh(op.matrix, k=k, sigma=sigma, which="LM", tol=tol)
    except Exception as exc:
        raise NumericalFailureError(f"eigensolve failed: {exc}") from exc
    order = np.argsort(w)
    w, v = w[order], v[:, order]
    res = [
        float(np.linalg.norm(op.apply(v[:, i]) - w[i] * v[:, i]))
        for i in range(k)
    ]
    if max(res) > 1e-6:
        raise NumericalFailureError(f"eigen-residuals too large: {max(res)}")
    return w, v


def eigen_report(Q, box: BoxGrid2D, k: int = 6,
                 constrained: bool = True) -> EigenReport:
    """Spectral facts of L plus the constrained minima of L, A and B."""
    Lop = assemble_L(Q, box)
    w, v = lowest_spectrum(Lop, k=k)
    mu0 = -float(w[0])
    if mu0 <= 0:
        raise NumericalFailureError("L lost its negative eigenvalue")
    Yv = v[:, 0].reshape(box.shape)
    Yv = Yv * np.sign(Yv[box.shape[0] // 2, box.shape[1] // 2])
    Yv = Yv / np.sqrt(box.inner(Yv, Yv))
    kernel_gap = float(max(abs(w[1]), abs(w[2])))

    minima = {}
    if constrained:
        Qf, Q1 = _q_fields(Q, box)
        from .profiles import first_difference_4th

        Q2 = first_difference_4th(Qf, box.h2, axis=1)
        Aop = assemble_A(Q, box)
        Bop = assemble_B(Q, box)
        minima = {
            "A_QdQ": constrained_rayleigh_min(Aop, [Qf, Q1, Q2]),
            "L_Y": constrained_rayleigh_min(Lop, [Yv, Q1, Q2]),
            "L_Qcubed": constrained_rayleigh_min(Lop, [Qf**3, Q1, Q2]),
            "B_QdQ": constrained_rayleigh_min(Bop, [Qf, Q1, Q2]),
        }
    return EigenReport(
        lowest_eigenvalues=[float(x) for x in w],
        mu0=mu0,
        Y=Field2D(grid=box, values=Yv),
        kernel_gap=kernel_gap,
        constrained_minima=minima,
    )


def _shift_invert_factor(op: SymmetricOperator2D, Z: np.ndarray, G: np.ndarray,
                         sigma: float, H: sp.spmatrix):
    """Apply (A_local + Z G Z^T - sigma H)^{-1} via splu plus Woodbury."""
    S = (op.matrix - sigma * H).tocsc()
    lu = splu(S)
    if Z.size == 0:
        return lambda y: lu.solve(y)
    SZ = np.column_stack([lu.solve(Z[:, j]) for j in range(Z.shape[1])])
    core = np.linalg.inv(np.linalg.inv(G) + Z.T @ SZ)

    def apply(y):
        s = lu.solve(np.asarray(y, dtype=float))
        return s - SZ @ (core @ (Z.T @ s))

    return apply


def _operator_low_rank(op: SymmetricOperator2D):
    """The operator's own rank-2 terms as a symmetric Z G Z^T block."""
    w = op.weight
    cols, blocks = [], []
    for left, right, coeff in op.rank2_terms[::2]:
        # terms come in symmetric pairs; take one per pair
        cols.extend([left, right])
        blocks.append(np.array([[0.0, coeff * w], [coeff * w, 0.0]]))
    if not cols:
        return np.zeros((op.n, 0)), np.zeros((0, 0))
    Z = np.column_stack(cols)
    G = np.zeros((Z.shape[1], Z.shape[1]))
    i = 0
    for b in blocks:
        k = b.shape[0]
        G[i : i + k, i : i + k] = b
        i += k
    return Z, G


def constrained_rayleigh_min(
    op: SymmetricOperator2D,
    constraint_fields,
    lift: float = 100.0,
    tol: float = 1e-8,
) -> float:
    """min (Af, f) / ||f||_{H^1}^2 over the L^2-orthocomplement of constraints.

    Generalized eigenproblem A x = nu H x with H = -Delta + 1.  The L^2
    constraints (f, c_i) = 0 are eliminated exactly: with W = H^{-1} C the
    map P = I - W (C^T W)^{-1} C^T projects onto the constraint-satisfying
    subspace along span(W), and P^T A P represents the constrained form with
    no penalty bias.  P^T A P differs from A by a rank-6 correction built
    from C and V = A W, so shift-invert Lanczos still factorizes only the
    sparse part (Woodbury).  The eliminated 3-dimensional subspace is lifted
    by `lift` * C C^T so it cannot shadow the constrained minimum.  Two
    stages: a coarse solve from a safe shift below the spectrum, then a
    sharp shift just under the located minimum."""
    n = op.n
    H = h1_gram(op.grid)
    lu_H = splu(H.tocsc())

    if constraint_fields:
        C = np.column_stack(
            [np.asarray(c, dtype=float).ravel() for c in constraint_fields]
        )
        if C.shape[0] != n:
            raise InvalidConstraintsError("constraint fields do not match the grid")
        gram = C.T @ C * op.weight
        ev, U = np.linalg.eigh(gram)
        if ev[0] < 1e-10 * ev[-1]:
            raise InvalidConstraintsError("constraint fields are rank deficient")
        C = C @ (U / np.sqrt(ev))
        W = np.column_stack([lu_H.solve(C[:, j]) for j in range(C.shape[1])])
        M3 = np.linalg.inv(C.T @ W)
        V = np.column_stack([op.apply(W[:, j]) for j in range(W.shape[1])])
        S3 = W.T @ V
        k = C.shape[1]
        # P^T A P - A = C (M3 S3 M3) C^T - C M3 V^T - V M3 C^T, plus the
        # lift on the eliminated subspace
        Zc = np.column_stack([C, V])
        Gc = np.zeros((2 * k, 2 * k))
        Gc[:k, :k] = M3 @ S3 @ M3 + lift * np.eye(k)
        Gc[:k, k:] = -M3
        Gc[k:, :k] = -M3
    else:
        Zc = np.zeros((n, 0))
        Gc = np.zeros((0, 0))

    Z0, G0 = _operator_low_rank(op)
    Z = np.column_stack([Z0, Zc]) if Z0.size or Zc.size else np.zeros((n, 0))
    G = np.zeros((Z.shape[1], Z.shape[1]))
    G[: G0.shape[0], : G0.shape[0]] = G0
    G[G0.shape[0] :, G0.shape[0] :] = Gc

    def full_apply(x):
        out = op.matrix @ x
        if Z.size:
            out = out + Z @ (G @ (Z.T @ x))
        return out

    A_lo = LinearOperator((n, n), matvec=full_apply, dtype=float)

    def shifted_inverse(sigma):
        apply = _shift_invert_factor(op, Z, G, sigma, H)
        return LinearOperator((n, n), matvec=apply, dtype=float)

    # stage 1: coarse location from a certainly-safe shift
    pot_floor = float(np.min(op.matrix.diagonal())) - 1.0
    sigma = min(pot_floor, -2.0)
    try:
        w1, _ = eigsh(A_lo, k=3, M=H, sigma=sigma, which="LM", tol=1e-3,
                      OPinv=shifted_inverse(sigma))
        nu_est = float(np.min(w1))
        # stage 2: sharp shift just below the located minimum
        sigma2 = nu_est - 0.2
        w2, _ = eigsh(A_lo, k=2, M=H, sigma=sigma2, which="LM", tol=tol,
                      OPinv=shifted_inverse(sigma2))
    except ArithmeticError as exc:
        raise NumericalFailureError(f"constrained eigensolve failed: {exc}") from exc
    return float(np.min(w2))


def save_report(path: str, report: EigenReport, box: BoxGrid2D) -> None:
    payload = {
        "mu0": report.mu0,
        "kernel_gap": report.kernel_gap,
        "lowest_eigenvalues": report.lowest_eigenvalues,
        "constrained_minima": report.constrained_minima,
        "grid": {
            "h": box.h1,
            "box": [float(box.x1[0]), float(box.x1[-1])],
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
