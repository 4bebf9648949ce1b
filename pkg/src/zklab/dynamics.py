"""The finite-dimensional modulation system and its blow-up predictions.

In lab time t the system reads

    lambda_t = -b / lambda^2,   b_t = -theta b^2 / lambda^3,   s_t = 1 / lambda^3,

with lambda(0) = 1, b(0) = b0.  The quantity b / lambda^theta is conserved,
which gives the closed forms

    lambda(t) = (1 - (3 - theta) b0 t)^{1/(3-theta)},   b(t) = b0 lambda(t)^theta.

For b0 > 0 the scale hits zero at T = 1 / (b0 (3 - theta)).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidInputError

SOLITON = "Soliton"
BLOWUP = "Blowup"
GROWTH = "GrowthToInfinity"


@dataclass(frozen=True)
class OdeState:
    t: float
    s: float
    lam: float
    b: float

    def __post_init__(self):
        if self.lam <= 0:
            raise InvalidInputError(f"lambda must be positive, got {self.lam}")


@dataclass(frozen=True)
class OdeTrajectory:
    t: np.ndarray
    s: np.ndarray
    lam: np.ndarray
    b: np.ndarray
    singular: bool

    @property
    def b_over_lambda_theta(self):
        raise AttributeError("use conserved(theta); theta is not stored here")

    def conserved(self, theta: float) -> np.ndarray:
        return self.b / self.lam**theta

    def states(self):
        return [
            OdeState(t=float(t), s=float(s), lam=float(l), b=float(b))
            for t, s, l, b in zip(self.t, self.s, self.lam, self.b)
        ]


@dataclass(frozen=True)
class RegimePrediction:
    regime: str
    T: float | None
    exponents: dict
    ell1: float | None


def blowup_time(b0: float, theta: float) -> float:
    if b0 <= 0:
        raise DomainError("blow-up time exists only for b0 > 0")
    return 1.0 / (b0 * (3.0 - theta))


def closed_form(b0: float, theta: float, t) -> tuple[np.ndarray, np.ndarray]:
    """(lambda(t), b(t)) from the conservation law, lambda(0)=1."""
    t = np.asarray(t, dtype=float)
    u = 1.0 - (3.0 - theta) * b0 * t
    if np.any(u <= 0):
        raise DomainError(
            f"t beyond the blow-up time T={blowup_time(b0, theta)}"
        )
    lam = u ** (1.0 / (3.0 - theta))
    return lam, b0 * lam**theta


def closed_form_s(b0: float, theta: float, t) -> np.ndarray:
    """Rescaled time s(t) = int_0^t lambda^{-3}, s(0)=0."""
    t = np.asarray(t, dtype=float)
    if b0 == 0.0:
        return t.copy()
    u = 1.0 - (3.0 - theta) * b0 * t
    if np.any(u <= 0):
        raise DomainError("t beyond the blow-up time")
    return (u ** (-theta / (3.0 - theta)) - 1.0) / (theta * b0)


def _rhs(y: np.ndarray, theta: float) -> np.ndarray:
    lam, b = y[0], y[1]
    return np.array([-b / lam**2, -theta * b**2 / lam**3, 1.0 / lam**3])


def integrate(
    b0: float,
    theta: float,
    t_end: float,
    dt: float,
    max_halvings: int = 40,
) -> OdeTrajectory:
    """Classical RK4 in lab time with adaptive step halving.

    A step is halved (recursively) whenever it would change lambda by more
    than 5%; if lambda cannot be kept positive within `max_halvings` the
    trajectory is returned as far as it got, flagged singular."""
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    if t_end < 0:
        raise InvalidInputError("t_end must be nonnegative; integrate forward")
    ts, ss, lams, bs = [0.0], [0.0], [1.0], [b0]
    y = np.array([1.0, b0, 0.0])
    t = 0.0
    singular = False
    while t < t_end - 1e-14 * max(1.0, t_end):
        h = min(dt, t_end - t)
        level = 0
        while True:
            y_new = _rk4_step(y, h, theta)
            if y_new[0] > 0 and abs(y_new[0] - y[0]) <= 0.05 * y[0]:
                break
            h *= 0.5
            level += 1
            if level > max_halvings:
                singular = True
                break
        if singular:
            break
        y = y_new
        t += h
        ts.append(t)
        lams.append(float(y[0]))
        bs.append(float(y[1]))
        ss.append(float(y[2]))
    return OdeTrajectory(
        t=np.array(ts), s=np.array(ss), lam=np.array(lams), b=np.array(bs),
        singular=singular,
    )


def _rk4_step(y: np.ndarray, h: float, theta: float) -> np.ndarray:
    k1 = _rhs(y, theta)
    k2 = _rhs(y + 0.5 * h * k1, theta)
    k3 = _rhs(y + 0.5 * h * k2, theta)
    k4 = _rhs(y + h * k3, theta)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def predict(b0: float, theta: float) -> RegimePrediction:
    """Regime classification and the exponent pack of the blow-up law."""
    if not 1.0 < theta < 2.0:
        raise InvalidInputError(f"theta must lie in (1,2), got {theta}")
    exponents = {
        "lambda_exp": 1.0 / (3.0 - theta),
        "b_exp": theta / (3.0 - theta),
        "x1_exp": -(theta - 1.0) / (3.0 - theta),
        "gradient_exp": 1.0 / (3.0 - theta),
    }
    if b0 > 0:
        return RegimePrediction(
            regime=BLOWUP,
            T=blowup_time(b0, theta),
            exponents=exponents,
            ell1=((3.0 - theta) * b0) ** (1.0 / (3.0 - theta)),
        )
    if b0 < 0:
        return RegimePrediction(regime=GROWTH, T=None, exponents=exponents,
                                ell1=None)
    return RegimePrediction(regime=SOLITON, T=None, exponents=exponents,
                            ell1=None)


def fit_blowup_time(traj: OdeTrajectory, theta: float) -> float:
    """T from the singular approach: lambda^{3-theta} is affine in t."""
    z = traj.lam ** (3.0 - theta)
    # use the last third of the trajectory, closest to the singular time
    k = max(len(traj.t) // 3, 2)
    coeff = np.polyfit(traj.t[-k:], z[-k:], 1)
    if coeff[0] >= 0:
        raise DomainError("trajectory does not approach a singular time")
    return float(-coeff[1] / coeff[0])


def save_trajectory(path: str, traj: OdeTrajectory, theta: float) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "s", "lambda", "b", "b_over_lambda_theta"])
        for t, s, lam, b, c in zip(
            traj.t, traj.s, traj.lam, traj.b, traj.conserved(theta)
        ):
            writer.writerow([f"{t:.12g}", f"{s:.12g}", f"{lam:.12g}",
                             f"{b:.12g}", f"{c:.12g}"])


def save_prediction(path: str, pred: RegimePrediction) -> None:
    payload = {
        "regime": pred.regime,
        "T": pred.T,
        "exponents": pred.exponents,
        "ell1": pred.ell1,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
