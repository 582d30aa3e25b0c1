"""Time-dependent vector fields of OT conditional flow matching.

The exact marginal field is

    v_t(y) = (alpha_dot/alpha) y
             + beta * (beta_dot/beta - alpha_dot/alpha) * prox_{lam_t phi}(y / beta_t),

whose prox term is the denoiser recovering the clean endpoint.  A
conditional field carries one coupled pair, and a learned field wraps an
MLP from :mod:`flowprox.neural`.  Fields are immutable and evaluation is
pure; the valid time window is [EPS_T, 1 - EPS_T] because alpha_dot/alpha
and lam_t blow up at the endpoints.
"""

from dataclasses import dataclass

import numpy as np

from .potential import Potential, QuadraticPotential
from .schedule import EPS_T, Schedule

__all__ = [
    "VectorField",
    "ExactProxField",
    "ConditionalField",
    "LearnedField",
    "OslReport",
    "eval_field",
    "denoise",
    "field_jacobian",
    "moreau_flow_residual",
    "osl_check",
    "gradient_structure_check",
    "save_field_evals_csv",
]


def _check_t(t: float):
    if not EPS_T <= t <= 1.0 - EPS_T:
        raise ValueError(f"field evaluated outside [{EPS_T}, {1 - EPS_T}]: t={t}")


class VectorField:
    """Interface: ``dim`` attribute plus pure ``eval(t, y) -> v``."""

    dim: int
    schedule: Schedule

    def eval(self, t: float, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ExactProxField(VectorField):
    def __init__(self, potential: Potential, sched: Schedule):
        self.potential = potential
        self.schedule = sched
        self.dim = potential.dim

    def eval(self, t: float, y) -> np.ndarray:
        _check_t(t)
        p = self.schedule.eval(t)
        y = np.asarray(y, dtype=float)
        u = self.potential.prox(p.lam, y / p.beta).point
        rate = p.alpha_dot / p.alpha
        return rate * y + p.beta * (p.beta_dot / p.beta - rate) * u


class ConditionalField(VectorField):
    """Teaching field of one coupled pair: v = alpha_dot*x0 + beta_dot*x1."""

    def __init__(self, x0, x1, sched: Schedule):
        self.x0 = np.asarray(x0, dtype=float)
        self.x1 = np.asarray(x1, dtype=float)
        if self.x0.shape != self.x1.shape:
            raise ValueError("x0 and x1 must have equal dimension")
        self.schedule = sched
        self.dim = self.x0.shape[0]

    def eval(self, t: float, y=None) -> np.ndarray:
        _check_t(t)
        p = self.schedule.eval(t)
        return p.alpha_dot * self.x0 + p.beta_dot * self.x1


class LearnedField(VectorField):
    def __init__(self, model, sched: Schedule):
        from .neural import Mlp  # deferred to keep import graph acyclic

        if not isinstance(model, Mlp):
            raise TypeError("LearnedField expects an Mlp model")
        self.model = model
        self.schedule = sched
        self.dim = model.layer_dims[-1]

    def eval(self, t: float, y) -> np.ndarray:
        from .neural import forward

        _check_t(t)
        return forward(self.model, t, np.asarray(y, dtype=float))


@dataclass(frozen=True)
class OslReport:
    max_excess: float
    ok: bool


def eval_field(field: VectorField, t: float, y) -> np.ndarray:
    return field.eval(t, y)


def denoise(field: VectorField, t: float, y) -> np.ndarray:
    """Recover the clean endpoint x1 from a noisy state y at time t.

    Exact-prox fields return prox_{lam_t phi}(y / beta_t); learned fields
    invert the marginal-field relation
    x1 = (v - (alpha_dot/alpha) y) / (beta_dot - beta*alpha_dot/alpha).
    """
    _check_t(t)
    y = np.asarray(y, dtype=float)
    if isinstance(field, ExactProxField):
        p = field.schedule.eval(t)
        return field.potential.prox(p.lam, y / p.beta).point
    if isinstance(field, LearnedField):
        p = field.schedule.eval(t)
        rate = p.alpha_dot / p.alpha
        return (field.eval(t, y) - rate * y) / (p.beta_dot - p.beta * rate)
    raise ValueError("denoise needs an exact-prox or learned field")


def field_jacobian(field: VectorField, t: float, x, step: float = None) -> np.ndarray:
    """Central-difference Jacobian of v_t at x, step 1e-4 * (1 + ||x||).

    Finite differences are used because the prox of a manifold-supported
    potential is only semidifferentiable on the data manifold itself;
    off-manifold (where trajectories live for t < 1) it is differentiable
    almost everywhere.
    """
    x = np.asarray(x, dtype=float)
    h = step if step is not None else 1e-4 * (1.0 + float(np.linalg.norm(x)))
    d = x.shape[0]
    jac = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        jac[:, j] = (field.eval(t, x + e) - field.eval(t, x - e)) / (2.0 * h)
    return jac


def moreau_flow_residual(field: ExactProxField, t: float, x) -> float:
    """Defect of the rescaled Moreau-envelope flow identity.

    With z = x / beta_t the exact-prox dynamics satisfies
    dz/dt = -c_t * lam_t * grad M_{lam_t phi}(z),  c_t = beta_dot/beta -
    alpha_dot/alpha; the time derivative of z is formed analytically from
    the field so the identity holds to rounding.
    """
    if not isinstance(field, ExactProxField):
        raise ValueError("moreau_flow_residual needs an exact-prox field")
    _check_t(t)
    p = field.schedule.eval(t)
    x = np.asarray(x, dtype=float)
    z = x / p.beta
    v = field.eval(t, x)
    dz = (v * p.beta - p.beta_dot * x) / p.beta ** 2
    c_t = p.beta_dot / p.beta - p.alpha_dot / p.alpha
    _, grad_m = field.potential.moreau(p.lam, z)
    return float(np.linalg.norm(dz + c_t * p.lam * grad_m))


def osl_check(field: VectorField, t: float, pairs) -> OslReport:
    """One-sided Lipschitz bound <v(x)-v(y), x-y> <= (beta_dot/beta)||x-y||^2.

    Valid whenever the prox weight b(t) = beta*(beta_dot/beta -
    alpha_dot/alpha) is nonnegative; raises if the hypothesis fails.
    """
    _check_t(t)
    if field.schedule.b_coeff(t) < 0:
        raise ValueError("OSL bound requires b(t) >= 0")
    p = field.schedule.eval(t)
    ell = p.beta_dot / p.beta
    max_excess = -np.inf
    scale = 1.0
    for x, y in pairs:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        dv = field.eval(t, x) - field.eval(t, y)
        dx = x - y
        lhs = float(dv @ dx)
        bound = ell * float(dx @ dx)
        max_excess = max(max_excess, lhs - bound)
        scale = max(scale, abs(lhs) + abs(bound))
    return OslReport(max_excess=float(max_excess), ok=max_excess <= 1e-8 * scale)


def save_field_evals_csv(field: VectorField, ts, points, path) -> None:
    """Rows t, x_1..x_d, v_1..v_d for each (t, x) evaluation."""
    with open(path, "w", newline="\n") as fh:
        for t, x in zip(ts, points):
            x = np.asarray(x, dtype=float)
            v = field.eval(float(t), x)
            fh.write(",".join(f"{u:.17g}" for u in (float(t), *x, *v)) + "\n")


def gradient_structure_check(field: ExactProxField, t: float, x) -> float:
    """Max-norm asymmetry of the field Jacobian (gradient fields: 0).

    Only meaningful where the potential is smooth, so the quadratic
    variant is required.
    """
    if not isinstance(field, ExactProxField) or not isinstance(
            field.potential, QuadraticPotential):
        raise ValueError("gradient structure check requires a quadratic potential")
    jac = field_jacobian(field, t, np.asarray(x, dtype=float), step=1e-5)
    return float(np.max(np.abs(jac - jac.T)))
