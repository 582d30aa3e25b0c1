"""Interpolation schedules (alpha_t, beta_t) and the log-time rescaling.

A schedule fixes the conditional path x_t = alpha_t * x0 + beta_t * x1.
Two parametric families are supported so that derivatives and the
terminal rate are analytically exact:

* ``affine``:    alpha_t = 1 - t,             beta_t = t
* ``powerlaw``:  alpha_t = C_a * (1-t)**g,    beta_t = C_b * t**e

The prox step size is lam_t = alpha_t / beta_t, and the terminal rate
gamma is the limit of -(1-t) * d(log alpha_t)/dt as t -> 1 (g for the
power law, 1 for the affine family).
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

__all__ = ["Schedule", "SchedulePoint", "tau_of_t", "t_of_tau", "EPS_T"]

# Evaluation window guard: 1/alpha and 1/beta are only formed for
# t in [EPS_T, 1 - EPS_T].
EPS_T = 1e-6


class SchedulePoint(NamedTuple):
    alpha: float
    beta: float
    alpha_dot: float
    beta_dot: float
    lam: float


@dataclass(frozen=True)
class Schedule:
    """Immutable schedule family; safe to share across threads.

    Parameters
    ----------
    family : str
        ``"affine"`` or ``"powerlaw"``.
    gamma_exp, eta_exp : float
        Power-law exponents of alpha and beta (ignored for affine).
    c_alpha, c_beta : float
        Power-law prefactors, default 1 so the affine family is the
        gamma = eta = 1 special case.
    """

    family: str
    gamma_exp: float = 1.0
    eta_exp: float = 1.0
    c_alpha: float = 1.0
    c_beta: float = 1.0

    def __post_init__(self):
        if self.family not in ("affine", "powerlaw"):
            raise ValueError(f"unknown schedule family: {self.family!r}")
        if self.family == "powerlaw":
            for name in ("gamma_exp", "eta_exp", "c_alpha", "c_beta"):
                if not getattr(self, name) > 0:
                    raise ValueError(f"powerlaw schedule requires {name} > 0")

    @staticmethod
    def affine() -> "Schedule":
        return Schedule("affine")

    @staticmethod
    def powerlaw(gamma: float, eta: float = 1.0,
                 c_alpha: float = 1.0, c_beta: float = 1.0) -> "Schedule":
        return Schedule("powerlaw", gamma_exp=gamma, eta_exp=eta,
                        c_alpha=c_alpha, c_beta=c_beta)

    def eval(self, t: float) -> SchedulePoint:
        """Evaluate (alpha, beta, alpha_dot, beta_dot, lam) at t in (0, 1).

        Derivatives are exact analytic derivatives of the family and
        lam = alpha / beta by construction.
        """
        if not 0.0 < t < 1.0:
            raise ValueError(f"schedule evaluated outside (0,1): t={t}")
        if self.family == "affine":
            alpha, beta = 1.0 - t, t
            alpha_dot, beta_dot = -1.0, 1.0
        else:
            g, e = self.gamma_exp, self.eta_exp
            alpha = self.c_alpha * (1.0 - t) ** g
            alpha_dot = -self.c_alpha * g * (1.0 - t) ** (g - 1.0)
            beta = self.c_beta * t ** e
            beta_dot = self.c_beta * e * t ** (e - 1.0)
        return SchedulePoint(alpha, beta, alpha_dot, beta_dot, alpha / beta)

    def gamma(self) -> float:
        """Terminal rate gamma = -lim_{t->1} (1-t) * alpha_dot / alpha.

        The analytic value is cross-checked against a numeric probe at
        t = 1 - 1e-6; a disagreement indicates a broken family formula.
        """
        g = 1.0 if self.family == "affine" else self.gamma_exp
        t = 1.0 - 1e-6
        p = self.eval(t)
        probe = (1.0 - t) * p.alpha_dot / p.alpha
        if abs(probe + g) > 1e-6:
            raise AssertionError(
                f"schedule condition probe failed: (1-t)*ad/a={probe}, gamma={g}")
        return g

    def b_coeff(self, t: float) -> float:
        """Prox weight b(t) = beta * (beta_dot/beta - alpha_dot/alpha)."""
        p = self.eval(t)
        return p.beta * (p.beta_dot / p.beta - p.alpha_dot / p.alpha)

    def to_config(self) -> dict:
        if self.family == "affine":
            return {"family": "affine"}
        return {"family": "powerlaw", "gamma": self.gamma_exp, "eta": self.eta_exp,
                "c_alpha": self.c_alpha, "c_beta": self.c_beta}

    @staticmethod
    def from_config(cfg: dict) -> "Schedule":
        family = cfg.get("family")
        if family == "affine":
            extra = set(cfg) - {"family"}
            if extra:
                raise ValueError(f"unknown schedule keys: {sorted(extra)}")
            return Schedule.affine()
        if family == "powerlaw":
            extra = set(cfg) - {"family", "gamma", "eta", "c_alpha", "c_beta"}
            if extra:
                raise ValueError(f"unknown schedule keys: {sorted(extra)}")
            return Schedule.powerlaw(
                gamma=float(cfg["gamma"]), eta=float(cfg.get("eta", 1.0)),
                c_alpha=float(cfg.get("c_alpha", 1.0)),
                c_beta=float(cfg.get("c_beta", 1.0)))
        raise ValueError(f"unknown schedule family: {family!r}")


def tau_of_t(t: float) -> float:
    """Log-time rescaling tau = -log(1 - t) for t in [0, 1)."""
    if not 0.0 <= t < 1.0:
        raise ValueError(f"tau_of_t requires t in [0,1): t={t}")
    return -math.log1p(-t)


def t_of_tau(tau: float) -> float:
    """Inverse rescaling t = 1 - exp(-tau) for tau >= 0."""
    if tau < 0.0:
        raise ValueError(f"t_of_tau requires tau >= 0: tau={tau}")
    return -math.expm1(-tau)
