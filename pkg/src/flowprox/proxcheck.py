"""Self-contained verification suites for the prox machinery.

Each check pits a closed-form or trained code path against an independent
numerical oracle (grid search plus golden-section refinement on the
conjugate definition, brute-force couplings, seeded sampling) and returns
a JSON-friendly dict.  The CLI ``prox_check`` command runs
:func:`run_default_suite`; the acceptance tests reuse the individual
checks at their stated tolerances.
"""

import math

import numpy as np

from .potential import (EmpiricalPotential, LineManifoldPotential, Potential,
                        QuadraticPotential, QuarticTestFunction, build_empirical,
                        loglog_slope, prox_expansion_residual)
from .rng import make_rng
from .schedule import Schedule
from .transport import PointCloud, ot_couple

__all__ = [
    "golden_section_max",
    "conjugate_argmax_oracle",
    "check_prox_identity",
    "check_perfect_denoiser",
    "check_nonexpansiveness",
    "check_expansion_slope",
    "run_default_suite",
    "make_coupled_pairs",
]


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Argmax of a unimodal scalar function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * (1.0 + abs(a) + abs(b)):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _grid_golden_max(f, bound: float, coarse: int = 201) -> float:
    xs = np.linspace(-bound, bound, coarse)
    vals = np.array([f(x) for x in xs])
    i = int(np.argmax(vals))
    lo = xs[max(i - 1, 0)]
    hi = xs[min(i + 1, coarse - 1)]
    return golden_section_max(f, lo, hi)


def conjugate_argmax_oracle(phi: Potential, sched: Schedule, t: float, y,
                            bound: float = 50.0) -> np.ndarray:
    """argmax_x [<y, x> - psi_t(x)] with psi_t = alpha*phi + beta/2 ||.||^2.

    Grid search plus golden-section refinement, fully independent of the
    prox code path.  Supports the closed-form variants whose conjugate
    problem separates per coordinate: 1-D potentials, diagonal quadratics,
    and the line-manifold indicator.
    """
    p = sched.eval(t)
    y = np.asarray(y, dtype=float)

    if isinstance(phi, LineManifoldPotential):
        def obj(x1):
            return (y[0] * x1 + y[1] * phi.c
                    - p.alpha * 0.5 * x1 ** 2
                    - p.beta * 0.5 * (x1 ** 2 + phi.c ** 2))
        return np.array([_grid_golden_max(obj, bound), phi.c])

    if isinstance(phi, QuadraticPotential):
        off_diag = phi.B - np.diag(np.diag(phi.B))
        if np.any(off_diag != 0.0):
            raise ValueError("conjugate oracle supports diagonal quadratics only")
        out = np.empty(phi.dim)
        for j in range(phi.dim):
            bjj, bj, mj, yj = phi.B[j, j], phi.b[j], phi.m[j], y[j]

            def obj(x, bjj=bjj, bj=bj, mj=mj, yj=yj):
                return (yj * x - p.alpha * (0.5 * bjj * (x - mj) ** 2 + bj * x)
                        - p.beta * 0.5 * x ** 2)
            out[j] = _grid_golden_max(obj, bound)
        return out

    raise ValueError(f"no conjugate oracle for {type(phi).__name__}")


def make_coupled_pairs(phi: Potential, n: int, seed: int):
    """Pairs (x0, x1) with x0 in the subdifferential of phi at x1."""
    rng = make_rng(seed, stream=29)
    if isinstance(phi, QuadraticPotential):
        x1 = rng.standard_normal((n, phi.dim))
        x0 = np.stack([phi.gradient(v) for v in x1])
    elif isinstance(phi, LineManifoldPotential):
        u = rng.standard_normal(n)
        s = rng.standard_normal(n)
        x1 = np.stack([u, np.full(n, phi.c)], axis=1)
        x0 = np.stack([u, s], axis=1)  # subdifferential is {(u, s) : s real}
    elif isinstance(phi, EmpiricalPotential):
        raise ValueError("empirical pairs come from the coupling that built phi")
    else:
        raise ValueError(f"no coupled-pair sampler for {type(phi).__name__}")
    return x0, x1


def check_prox_identity(sched: Schedule = None, ts=(0.5, 0.8),
                        tol: float = 1e-4) -> dict:
    """grad psi_t^* from the prox equals the conjugate-argmax oracle."""
    sched = sched or Schedule.affine()
    grid_1d = np.linspace(-2.0, 2.0, 41)
    cases = [
        ("half_sq_1d", QuadraticPotential.half_sq_norm(1), grid_1d[:, None]),
        ("shifted_quadratic_1d",
         QuadraticPotential(np.array([[2.0]]), b=[0.3], m=[-0.5]),
         grid_1d[:, None]),
        ("diag_quadratic_2d", QuadraticPotential(np.diag([1.0, 4.0])),
         np.stack(np.meshgrid(grid_1d, grid_1d), axis=-1).reshape(-1, 2)),
        ("line_manifold", LineManifoldPotential(c=1.0),
         np.stack(np.meshgrid(grid_1d, grid_1d), axis=-1).reshape(-1, 2)),
    ]
    worst = 0.0
    for _, phi, ys in cases:
        for t in ts:
            p = sched.eval(t)
            for y in ys:
                u = phi.prox(p.lam, np.asarray(y) / p.beta).point
                ref = conjugate_argmax_oracle(phi, sched, t, y)
                worst = max(worst, float(np.max(np.abs(u - ref))))
    return {"name": "prox_identity_vs_conjugate_oracle", "ok": worst <= tol,
            "value": worst, "tolerance": tol}


def check_perfect_denoiser(n_pairs: int = 256, ts=(0.1, 0.5, 0.9),
                           tol: float = 1e-6, seed: int = 0,
                           sched: Schedule = None,
                           extra_cases=None) -> dict:
    """prox_{lam_t phi}(x_t / beta_t) recovers x1 exactly on coupled paths."""
    sched = sched or Schedule.affine()
    cases = []
    quad = QuadraticPotential(np.array([[1.2, 0.3], [0.3, 0.8]]), b=None, m=[0.2, -0.1])
    cases.append((quad,) + make_coupled_pairs(quad, n_pairs, seed))
    line = LineManifoldPotential(c=1.0)
    cases.append((line,) + make_coupled_pairs(line, n_pairs, seed + 1))
    rng = make_rng(seed, stream=31)
    x0_cloud = PointCloud(rng.standard_normal((n_pairs, 2)))
    x1_cloud = PointCloud(0.5 * rng.standard_normal((n_pairs, 2)) + 1.0)
    coupling = ot_couple(x0_cloud, x1_cloud)
    phi_n = build_empirical(coupling)
    cases.append((phi_n, coupling.matched_sources(), x1_cloud.points))
    if extra_cases:
        cases.extend(extra_cases)
    worst = 0.0
    for phi, x0s, x1s in cases:
        for t in ts:
            p = sched.eval(t)
            for x0, x1 in zip(x0s, x1s):
                xt = p.alpha * x0 + p.beta * x1
                rec = phi.prox(p.lam, xt / p.beta).point
                worst = max(worst, float(np.max(np.abs(rec - x1))))
    return {"name": "perfect_denoiser", "ok": worst <= tol,
            "value": worst, "tolerance": tol}


def check_nonexpansiveness(n_pairs: int = 500, seed: int = 0,
                           slack: float = 1e-9) -> dict:
    """||prox(z1) - prox(z2)|| <= ||z1 - z2|| for every variant."""
    rng = make_rng(seed, stream=37)
    coupling = ot_couple(PointCloud(rng.standard_normal((64, 2))),
                         PointCloud(rng.standard_normal((64, 2))))
    variants = [
        QuadraticPotential(np.array([[1.5, 0.2], [0.2, 0.7]])),
        LineManifoldPotential(c=0.5),
        build_empirical(coupling),
    ]
    worst = -math.inf
    for phi in variants:
        for lam in (0.1, 1.0, 10.0):
            z1 = 3.0 * rng.standard_normal((n_pairs, 2))
            z2 = 3.0 * rng.standard_normal((n_pairs, 2))
            for a, b in zip(z1, z2):
                lhs = float(np.linalg.norm(phi.prox(lam, a).point
                                           - phi.prox(lam, b).point))
                worst = max(worst, lhs - float(np.linalg.norm(a - b)))
    return {"name": "prox_nonexpansiveness", "ok": worst <= slack,
            "value": worst, "tolerance": slack}


def check_expansion_slope(tol: float = 0.1) -> dict:
    """log-log slope of the first-order prox expansion residual is 2."""
    phi = QuarticTestFunction(dim=1)
    lams = np.logspace(-3, -1, 9)
    pairs = prox_expansion_residual(phi, np.array([1.0]), lams)
    slope = loglog_slope(pairs)
    return {"name": "prox_expansion_slope", "ok": abs(slope - 2.0) <= tol,
            "value": slope, "tolerance": tol}


def run_default_suite(seed: int = 0) -> list:
    return [
        check_prox_identity(),
        check_perfect_denoiser(seed=seed),
        check_nonexpansiveness(seed=seed),
        check_expansion_slope(),
    ]
