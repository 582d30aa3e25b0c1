"""Convex potentials, proximal operators, and Moreau envelopes.

Three potential variants are supported:

* :class:`QuadraticPotential` -- phi(x) = 1/2 (x-m)' B (x-m) + <b, x>,
  closed-form prox (I + lam*B)^{-1} (z + lam*(B m - b)).
* :class:`LineManifoldPotential` -- phi(p, q) = 1/2 p^2 + indicator{q = c}
  on R^2, the worked low-dimensional target; prox projects q to c exactly.
* :class:`EmpiricalPotential` -- max of affine planes built from an exact
  OT coupling and its Kantorovich duals; prox solved through the dual
  simplex QP (Moreau decomposition).

The empirical prox QP  min_{mu in simplex} ||z - lam*A'mu||^2/(2 lam) + h'mu
is solved with a fully corrective Frank-Wolfe scheme (Wolfe's min-norm-point
pattern): each major cycle adds the steepest vertex and re-solves the active
face exactly, so the returned point is accurate to linear-solve precision
and the Frank-Wolfe gap certifies convergence.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .rng import make_rng, child_seed
from .schedule import Schedule
from .transport import Coupling, PointCloud, ot_couple

__all__ = [
    "ProxResult",
    "Potential",
    "QuadraticPotential",
    "LineManifoldPotential",
    "EmpiricalPotential",
    "QuarticTestFunction",
    "prox",
    "moreau",
    "grad_psi_star",
    "build_empirical",
    "prox_expansion_residual",
    "loglog_slope",
    "prox_semiderivative",
    "minibatch_prox_convergence",
    "save_empirical_csv",
    "load_empirical_csv",
    "potential_from_config",
]


@dataclass(frozen=True)
class ProxResult:
    """Prox point plus the attained Moreau objective.

    ``iterations`` is 0 for closed forms; ``active_set`` lists the planes
    carrying dual weight (empirical variant only).
    """

    point: np.ndarray
    objective: float
    iterations: int = 0
    active_set: Optional[list] = None


class Potential:
    """Base class: proper, lsc, convex by construction of each variant."""

    dim: int
    is_smooth: bool = False

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def prox(self, lam: float, z: np.ndarray) -> ProxResult:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise ValueError(f"{type(self).__name__} is not differentiable")

    def moreau(self, lam: float, z: np.ndarray):
        """Moreau envelope value and gradient (z - prox)/lam at z."""
        z = np.asarray(z, dtype=float)
        res = self.prox(lam, z)
        return res.objective, (z - res.point) / lam


def _check_lam(lam: float):
    if not lam > 0:
        raise ValueError(f"prox parameter must be positive, got {lam}")


class QuadraticPotential(Potential):
    is_smooth = True

    def __init__(self, B: np.ndarray, b=None, m=None):
        B = np.atleast_2d(np.asarray(B, dtype=float))
        d = B.shape[0]
        if B.shape != (d, d) or not np.allclose(B, B.T, atol=1e-12):
            raise ValueError("B must be symmetric")
        if np.min(np.linalg.eigvalsh(B)) < -1e-10:
            raise ValueError("B must be positive semidefinite")
        self.B = B
        self.b = np.zeros(d) if b is None else np.asarray(b, dtype=float)
        self.m = np.zeros(d) if m is None else np.asarray(m, dtype=float)
        if self.b.shape != (d,) or self.m.shape != (d,):
            raise ValueError("b and m must be d-vectors")
        self.dim = d

    @staticmethod
    def half_sq_norm(d: int) -> "QuadraticPotential":
        """phi(x) = 1/2 ||x||^2, the identity-coupling potential."""
        return QuadraticPotential(np.eye(d))

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        r = x - self.m
        return float(0.5 * r @ self.B @ r + self.b @ x)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.B @ (x - self.m) + self.b

    def prox(self, lam: float, z) -> ProxResult:
        _check_lam(lam)
        z = np.asarray(z, dtype=float)
        u = np.linalg.solve(np.eye(self.dim) + lam * self.B,
                            z + lam * (self.B @ self.m - self.b))
        obj = self.value(u) + float(np.sum((u - z) ** 2)) / (2.0 * lam)
        return ProxResult(point=u, objective=obj)


class LineManifoldPotential(Potential):
    """phi(p, q) = 1/2 p^2 + indicator{q = c} on R^2."""

    def __init__(self, c: float):
        self.c = float(c)
        self.dim = 2

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x[1] != self.c:
            return math.inf
        return float(0.5 * x[0] ** 2)

    def prox(self, lam: float, z) -> ProxResult:
        _check_lam(lam)
        z = np.asarray(z, dtype=float)
        u = np.array([z[0] / (1.0 + lam), self.c])
        obj = 0.5 * u[0] ** 2 + float(np.sum((u - z) ** 2)) / (2.0 * lam)
        return ProxResult(point=u, objective=obj)


class EmpiricalPotential(Potential):
    """Max-of-affine potential phi(x) = max_l (<a_l, x> - h_l)."""

    def __init__(self, planes_a: np.ndarray, planes_h: np.ndarray):
        a = np.atleast_2d(np.asarray(planes_a, dtype=float))
        h = np.atleast_1d(np.asarray(planes_h, dtype=float))
        if a.shape[0] != h.shape[0] or a.shape[0] < 1:
            raise ValueError("need at least one plane with matching offsets")
        self.planes_a = a
        self.planes_h = h
        self.dim = a.shape[1]
        self.n_planes = a.shape[0]

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.max(self.planes_a @ x - self.planes_h))

    def prox(self, lam: float, z, tol: float = 1e-12, max_iters: int = 10000) -> ProxResult:
        _check_lam(lam)
        z = np.asarray(z, dtype=float)
        a, h = self.planes_a, self.planes_h
        # dual QP data: J(mu) = 1/2 mu'Q mu + c'mu (+ const), Q = lam*AA'
        c = h - a @ z
        scale = 1.0 + float(np.sum(z * z)) / (2.0 * lam) + float(np.max(np.abs(h)))
        j0 = int(np.argmin(0.5 * lam * np.sum(a * a, axis=1) + c))
        support = [j0]
        weights = np.array([1.0])
        iterations = 0
        gap = math.inf
        def dual_obj(sup, w):
            p = w @ a[sup]
            return 0.5 * lam * float(p @ p) + float(c[sup] @ w)

        for iterations in range(1, max_iters + 1):
            u = z - lam * (weights @ a[support])
            grad = h - a @ u  # dual gradient over all planes
            jstar = int(np.argmin(grad))
            gap = float(weights @ grad[support] - grad[jstar])
            if gap <= tol * scale:
                break
            obj_cur = dual_obj(support, weights)
            if jstar not in support:
                support.append(jstar)
                weights = np.append(weights, 0.0)
            new_support, new_weights, ok = self._corrective_step(lam, c, support, weights)
            if ok and dual_obj(new_support, new_weights) < obj_cur - 1e-15 * scale:
                support, weights = new_support, new_weights
            else:
                # degenerate face: take the exact line-search Frank-Wolfe step,
                # which decreases the dual objective by at least gap^2/(2 kappa)
                p_dir = a[jstar] - weights @ a[support]
                kappa = lam * float(p_dir @ p_dir)
                theta = 1.0 if kappa <= 0 else min(1.0, gap / kappa)
                weights = (1.0 - theta) * weights
                weights[support.index(jstar)] += theta
        else:
            raise RuntimeError(
                f"empirical prox did not converge after {max_iters} iterations "
                f"(frank-wolfe gap {gap:.3e})")
        u = z - lam * (weights @ a[support])
        obj = self.value(u) + float(np.sum((u - z) ** 2)) / (2.0 * lam)
        order = np.argsort(support)
        active = [support[i] for i in order if weights[i] > 1e-12]
        return ProxResult(point=u, objective=obj, iterations=iterations,
                          active_set=active)

    def _corrective_step(self, lam, c, support, weights):
        """Minimize the dual exactly over the current face (Wolfe minor cycles).

        Faces with affinely dependent lifted planes (a_j, h_j) make the
        affine subproblem unbounded along weight directions that leave the
        prox point fixed; those directions are followed to a sub-face first
        (the objective decreases linearly along them), after which the KKT
        solve is well-posed.  Returns (support, weights, ok).
        """
        a, h = self.planes_a, self.planes_h
        for _ in range(2 * len(support) + 4):
            s = len(support)
            if s == 1:
                return support, np.array([1.0]), True
            asub = a[support]
            lifted = np.concatenate([asub, np.ones((s, 1))], axis=1)
            # nullspace of lifted': weight moves with A'nu = 0 and sum(nu) = 0
            _, sv, vt = np.linalg.svd(lifted.T, full_matrices=True)
            rank = int(np.sum(sv > 1e-12 * sv[0]))
            null_basis = vt[rank:]
            if null_basis.size:
                proj = null_basis @ h[support]
                if np.linalg.norm(proj) > 1e-12 * (1.0 + np.linalg.norm(h[support])):
                    dir_vec = -(null_basis.T @ proj)
                    dir_vec /= np.linalg.norm(dir_vec)
                    neg = dir_vec < 0
                    if not np.any(neg):
                        return support, weights, False
                    with np.errstate(divide="ignore"):
                        steps = weights[neg] / -dir_vec[neg]
                    theta = float(np.min(steps))
                    weights = np.maximum(weights + theta * dir_vec, 0.0)
                    keep = np.ones(s, dtype=bool)
                    drop = np.flatnonzero(neg)[int(np.argmin(steps))]
                    keep[drop] = False
                    keep &= (weights > 1e-15) | ~neg
                    support = [j for j, k in zip(support, keep) if k]
                    weights = weights[keep]
                    total = weights.sum()
                    if total <= 0 or not support:
                        return support, weights, False
                    weights = weights / total
                    continue
            kkt = np.zeros((s + 1, s + 1))
            kkt[:s, :s] = lam * (asub @ asub.T)
            kkt[:s, s] = 1.0
            kkt[s, :s] = 1.0
            rhs = np.concatenate([-c[support], [1.0]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            v = sol[:s]
            if not np.all(np.isfinite(v)):
                return support, weights, False
            if np.all(v >= -1e-14):
                w = np.maximum(v, 0.0)
                return support, w / w.sum(), True
            # walk toward v until the first weight hits zero, then drop it
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(v < 0, weights / (weights - v), np.inf)
            blocker = int(np.argmin(ratios))
            theta = float(ratios[blocker])
            weights = weights + theta * (v - weights)
            keep = np.ones(s, dtype=bool)
            keep[blocker] = False
            keep &= weights > 1e-15
            if not np.any(keep):
                return support, weights, False
            support = [j for j, k in zip(support, keep) if k]
            weights = weights[keep]
            weights = weights / weights.sum()
        return support, weights, False


class QuarticTestFunction(Potential):
    """Smooth test family phi(x) = 1/4 ||x||^4 for the prox-expansion check."""

    is_smooth = True

    def __init__(self, dim: int = 1):
        self.dim = dim

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.25 * np.sum(x * x) ** 2)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return float(np.sum(x * x)) * x

    def prox(self, lam: float, z) -> ProxResult:
        _check_lam(lam)
        z = np.asarray(z, dtype=float)
        r = float(np.linalg.norm(z))
        if r == 0.0:
            u = np.zeros_like(z)
        else:
            # u is parallel to z with radius solving s + lam*s^3 = r
            s = brentq(lambda s: s + lam * s ** 3 - r, 0.0, r,
                       xtol=1e-15, rtol=8.9e-16)
            u = (s / r) * z
        obj = self.value(u) + float(np.sum((u - z) ** 2)) / (2.0 * lam)
        return ProxResult(point=u, objective=obj)


def prox(phi: Potential, lam: float, z) -> ProxResult:
    """prox_{lam*phi}(z) = argmin_u phi(u) + ||u - z||^2 / (2 lam)."""
    return phi.prox(lam, z)


def moreau(phi: Potential, lam: float, z):
    """Moreau envelope value and its gradient (z - prox)/lam."""
    return phi.moreau(lam, z)


def grad_psi_star(phi: Potential, sched: Schedule, t: float, y,
                  verify: bool = False, n_probes: int = 32,
                  probe_seed: int = 0) -> np.ndarray:
    """Gradient of the conjugate of psi_t = alpha*phi + beta/2 ||.||^2.

    Computed through the prox identity grad psi_t^*(y) =
    prox_{lam_t phi}(y / beta_t).  With ``verify`` the subgradient side of
    the duality is checked: g = (y - beta*u)/alpha must satisfy
    phi(w) >= phi(u) + <g, w - u> at seeded probe points w.
    """
    p = sched.eval(t)
    y = np.asarray(y, dtype=float)
    u = phi.prox(p.lam, y / p.beta).point
    if verify:
        g = (y - p.beta * u) / p.alpha
        rng = make_rng(probe_seed, stream=23)
        spread = 1.0 + float(np.linalg.norm(u))
        phi_u = phi.value(u)
        scale = 1.0 + abs(phi_u) + float(np.linalg.norm(g)) * spread
        for _ in range(n_probes):
            w = u + spread * rng.standard_normal(phi.dim)
            if isinstance(phi, LineManifoldPotential):
                w[1] = phi.c  # probe inside dom phi
            slack = phi.value(w) - phi_u - float(g @ (w - u))
            if slack < -1e-7 * scale:
                raise ValueError(
                    f"duality verification failed: subgradient slack {slack:.3e}")
    return u


def build_empirical(coupling: Coupling) -> EmpiricalPotential:
    """Empirical potential phi_n with x0[perm[l]] in the subdifferential at x1[l].

    Plane slopes are the matched source points; offsets come from the
    Kantorovich duals through h_l = 1/2 ||a_l||^2 - dual_g[perm[l]], which
    makes plane l active at x1[l] by complementary slackness.  Offsets are
    shifted so phi_n(0) = 0, and the subdifferential condition is verified
    before returning.
    """
    if coupling.source is None or coupling.target is None:
        raise ValueError("coupling must carry point clouds")
    if coupling.dual_g is None:
        raise ValueError("coupling must carry dual potentials")
    a = coupling.matched_sources()
    h = 0.5 * np.sum(a * a, axis=1) - coupling.dual_g[coupling.perm]
    h = h - np.min(h)
    x1 = coupling.target.points
    vals = x1 @ a.T - h[None, :]  # vals[l, k] = <a_k, x1_l> - h_k
    scale = 1.0 + float(np.max(np.abs(vals)))
    worst = float(np.max(np.max(vals, axis=1) - np.diag(vals)))
    if worst > 1e-7 * scale:
        raise ValueError(
            f"empirical potential construction failed: subdifferential "
            f"violation {worst:.3e} (bad duals?)")
    return EmpiricalPotential(a, h)


def prox_expansion_residual(phi: Potential, x, lam_list: Sequence[float]):
    """Residuals R_lam = prox_{lam phi}(x) - (x - lam*grad phi(x)).

    For a C^2 potential the residual is O(lam^2); fit the returned pairs
    with :func:`loglog_slope` to check the order.
    """
    if not phi.is_smooth:
        raise ValueError("prox expansion requires a smooth potential variant")
    x = np.asarray(x, dtype=float)
    g = phi.gradient(x)
    out = []
    for lam in lam_list:
        r = phi.prox(lam, x).point - (x - lam * g)
        out.append((float(lam), float(np.linalg.norm(r))))
    return out


def loglog_slope(pairs) -> float:
    """Least-squares slope of log||R|| against log(lam)."""
    lam = np.array([p[0] for p in pairs])
    r = np.array([p[1] for p in pairs])
    if np.any(r <= 0):
        raise ValueError("residuals must be positive for a log-log fit")
    return float(np.polyfit(np.log(lam), np.log(r), 1)[0])


def prox_semiderivative(phi: Potential, lam: float, x1, h) -> np.ndarray:
    """One-sided directional derivative of the prox at x1 along h.

    Uses Richardson-extrapolated one-sided differences with
    eps in {1e-3, 5e-4, 2.5e-4}; one-sided because the prox of a
    nonsmooth potential is only semidifferentiable.
    """
    _check_lam(lam)
    x1 = np.asarray(x1, dtype=float)
    h = np.asarray(h, dtype=float)
    if isinstance(phi, LineManifoldPotential):
        if abs(x1[1] - phi.c) > 1e-12 * (1.0 + abs(phi.c)):
            raise ValueError("x1 must lie in dom phi (second coordinate = c)")
    base = phi.prox(lam, x1).point
    eps_list = (1e-3, 5e-4, 2.5e-4)
    d = [(phi.prox(lam, x1 + e * h).point - base) / e for e in eps_list]
    r1 = 2.0 * d[1] - d[0]
    r2 = 2.0 * d[2] - d[1]
    if float(np.linalg.norm(r2 - r1)) > 1e-3:
        raise RuntimeError(
            f"semiderivative extrapolation did not converge: "
            f"|R2-R1| = {np.linalg.norm(r2 - r1):.3e}")
    return r2


def minibatch_prox_convergence(population: Potential, sampler, n_list: Sequence[int],
                               lam: float, grid: PointCloud, seed: int):
    """Sup-norm distance of empirical proxes from the population prox.

    For each batch size n, couples an n-point target sample with an
    n-point standard-normal sample by exact OT, builds the empirical
    potential, and reports sup_z ||prox_{lam phi_n}(z) - prox_{lam phi}(z)||
    over the grid.  Returns a list of (n, sup_error) rows.
    """
    from . import datasets  # deferred: datasets depends on transport only

    if not isinstance(population, (QuadraticPotential, LineManifoldPotential)):
        raise ValueError("population potential must have a closed-form prox")
    _check_lam(lam)
    pop_prox = np.stack([population.prox(lam, z).point for z in grid.points])
    rows = []
    for i, n in enumerate(n_list):
        x1 = datasets.sample(sampler, n, child_seed(seed, 2 * i))
        x0 = make_rng(child_seed(seed, 2 * i + 1), stream=3).standard_normal((n, x1.dim))
        phi_n = build_empirical(ot_couple(PointCloud(x0), x1))
        emp = np.stack([phi_n.prox(lam, z).point for z in grid.points])
        sup = float(np.max(np.linalg.norm(emp - pop_prox, axis=1)))
        rows.append((int(n), sup))
    return rows


def save_empirical_csv(phi: EmpiricalPotential, path) -> None:
    """Row l = a_l components then h_l."""
    with open(path, "w", newline="\n") as fh:
        for a_row, h in zip(phi.planes_a, phi.planes_h):
            fh.write(",".join(f"{v:.17g}" for v in a_row) + f",{h:.17g}\n")


def load_empirical_csv(path) -> EmpiricalPotential:
    data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    return EmpiricalPotential(data[:, :-1], data[:, -1])


def potential_from_config(cfg: dict) -> Potential:
    """Build a potential from its JSON-config form."""
    variant = cfg.get("variant")
    known = {
        "quadratic": {"variant", "B", "b", "m"},
        "line_manifold": {"variant", "c"},
        "empirical": {"variant", "csv"},
    }
    if variant not in known:
        raise ValueError(f"unknown potential variant: {variant!r}")
    extra = set(cfg) - known[variant]
    if extra:
        raise ValueError(f"unknown potential keys: {sorted(extra)}")
    if variant == "quadratic":
        B = np.asarray(cfg["B"], dtype=float)
        return QuadraticPotential(B, cfg.get("b"), cfg.get("m"))
    if variant == "line_manifold":
        return LineManifoldPotential(float(cfg.get("c", 0.0)))
    return load_empirical_csv(cfg["csv"])
