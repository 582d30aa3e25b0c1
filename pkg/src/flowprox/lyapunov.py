"""Terminal Lyapunov analysis along flow trajectories.

``jacobian_spectrum`` reproduces the eigenvalue-vs-time curves of the
scaled Jacobian (1-t) * D_x v_t; for manifold-supported targets the
spectrum splits into a neutral tangential group near 0 and a normal group
near -gamma.  ``terminal_exponents`` fits the asymptotic rates in
tau-time from the variational equation, renormalizing the perturbation
every Delta-tau to avoid underflow (Benettin-style log accumulation).
"""

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .field import VectorField, field_jacobian
from .flow import _integrate_rhs, _u_jacobian, _u_tau, advance
from .rng import make_rng
from .schedule import EPS_T
from .transport import PointCloud

__all__ = [
    "Line",
    "Circle",
    "SpectrumReport",
    "ExponentReport",
    "GapReport",
    "jacobian_spectrum",
    "terminal_exponents",
    "tangent_normal_split",
    "spectrum_gap",
]


@dataclass(frozen=True)
class Line:
    c: float


@dataclass(frozen=True)
class Circle:
    r: float


@dataclass(frozen=True)
class SpectrumReport:
    """Per-time eigenvalue statistics of (1-t) * D_x v_t across starts.

    ``eigs`` holds the raw per-start real parts (n_starts, n_times, d),
    sorted descending within each start/time; ``states`` the trajectory
    points where the Jacobians were taken.  ``n_complex_flagged`` counts
    eigenvalues per grid time whose imaginary part exceeded
    0.1*|real| + 0.1.
    """

    t_grid: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_trajectories: int
    n_complex_flagged: np.ndarray
    eigs: np.ndarray
    states: np.ndarray


@dataclass(frozen=True)
class ExponentReport:
    directions: np.ndarray
    exponents: np.ndarray
    fit_window: tuple
    residuals: np.ndarray


@dataclass(frozen=True)
class GapReport:
    n_tangential: int
    n_normal: int
    gap: float


def jacobian_spectrum(field: VectorField, starts: Union[PointCloud, int],
                      t_grid: Sequence[float], seed: int = 0,
                      steps: int = 1200) -> SpectrumReport:
    """Eigenvalue curves of the scaled Jacobian along integrated trajectories.

    ``starts`` is either an explicit cloud or a count of standard-normal
    starts drawn from ``seed``.  Each start is integrated from EPS_T
    through the (strictly increasing) grid times; at every grid time the
    finite-difference Jacobian of v_t is scaled by (1-t) and its
    eigenvalue real parts are recorded, sorted descending.
    """
    t_grid = np.asarray(sorted(float(t) for t in t_grid))
    if t_grid.size == 0:
        raise ValueError("t_grid must be nonempty")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid times must be distinct")
    if t_grid[0] <= EPS_T or t_grid[-1] >= 1.0 - EPS_T:
        raise ValueError("t_grid must lie strictly inside (EPS_T, 1-EPS_T)")
    if isinstance(starts, PointCloud):
        start_pts = starts.points
    else:
        start_pts = make_rng(seed, stream=5).standard_normal((int(starts), field.dim))
    n_starts = start_pts.shape[0]
    d = field.dim
    k = t_grid.size
    eigs = np.empty((n_starts, k, d))
    states = np.empty((n_starts, k, d))
    flagged = np.zeros(k, dtype=int)
    span = t_grid[-1] - EPS_T
    for s in range(n_starts):
        x = start_pts[s]
        t_prev = EPS_T
        for j, t in enumerate(t_grid):
            seg_steps = max(20, int(round(steps * (t - t_prev) / span)))
            x = advance(field, x, t_prev, t, seg_steps)
            t_prev = t
            ev = np.linalg.eigvals((1.0 - t) * field_jacobian(field, t, x))
            flagged[j] += int(np.sum(np.abs(ev.imag) > 0.1 * np.abs(ev.real) + 0.1))
            eigs[s, j] = np.sort(ev.real)[::-1]
            states[s, j] = x
    return SpectrumReport(
        t_grid=t_grid, mean=eigs.mean(axis=0), std=eigs.std(axis=0),
        n_trajectories=n_starts, n_complex_flagged=flagged,
        eigs=eigs, states=states)


def terminal_exponents(field: VectorField, x_start, directions,
                       tau_max: float, renorm_interval: float = 0.5,
                       dtau: float = 0.005) -> ExponentReport:
    """Fit terminal Lyapunov exponents of the rescaled flow.

    Integrates the variational equation for every direction along the
    shared base trajectory, renormalizing each perturbation every
    ``renorm_interval`` in tau while accumulating log-norms, then fits
    log||xi(tau)|| = lambda*tau + b by least squares over
    tau in [tau_max/2, tau_max].
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if np.any(np.linalg.norm(directions, axis=1) == 0):
        raise ValueError("directions must be nonzero")
    if tau_max < 4.0:
        warnings.warn("tau_max < 4 leaves little room for the asymptotic fit",
                      stacklevel=2)
    n_intervals = int(round(tau_max / renorm_interval))
    if n_intervals < 4:
        raise ValueError("tau_max too small for the fit window")
    x = np.asarray(x_start, dtype=float)
    d = x.shape[0]
    m = directions.shape[0]
    xi = directions.T.copy()  # (d, m) columns evolve independently
    log_norms = np.log(np.linalg.norm(xi, axis=0))
    xi /= np.linalg.norm(xi, axis=0)
    taus = [0.0]
    logs = [log_norms.copy()]

    def rhs(tau, s):
        xs = s[:d]
        mat = s[d:].reshape(d, m)
        jac = _u_jacobian(field, tau, xs)
        return np.concatenate([_u_tau(field, tau, xs), (jac @ mat).ravel()])

    sub_steps = max(1, int(round(renorm_interval / dtau)))
    state = np.concatenate([x, xi.ravel()])
    for j in range(n_intervals):
        tau0 = j * renorm_interval
        _, seg = _integrate_rhs(rhs, state, tau0, tau0 + renorm_interval,
                                sub_steps, "rk4")
        state = seg[-1]
        mat = state[d:].reshape(d, m)
        norms = np.linalg.norm(mat, axis=0)
        if np.any(norms < 1e-280):
            raise RuntimeError("perturbation underflow despite renormalization")
        log_norms = log_norms + np.log(norms)
        mat = mat / norms
        state = np.concatenate([state[:d], mat.ravel()])
        taus.append((j + 1) * renorm_interval)
        logs.append(log_norms.copy())
    taus = np.array(taus)
    logs = np.stack(logs)  # (n_checkpoints, m)
    lo, hi = tau_max / 2.0, tau_max
    window = (taus >= lo - 1e-12) & (taus <= hi + 1e-12)
    exponents = np.empty(m)
    residuals = np.empty(m)
    for i in range(m):
        coef = np.polyfit(taus[window], logs[window, i], 1)
        exponents[i] = coef[0]
        fit = np.polyval(coef, taus[window])
        residuals[i] = math.sqrt(float(np.mean((logs[window, i] - fit) ** 2)))
    return ExponentReport(directions=directions, exponents=exponents,
                          fit_window=(lo, hi), residuals=residuals)


def tangent_normal_split(manifold: Union[Line, Circle], x1):
    """Orthonormal tangent/normal bases of a known manifold at x1."""
    x1 = np.asarray(x1, dtype=float)
    if isinstance(manifold, Line):
        if abs(x1[1] - manifold.c) > 1e-6:
            raise ValueError(f"point {x1} is not on the line q = {manifold.c}")
        return np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])
    if isinstance(manifold, Circle):
        r = float(np.linalg.norm(x1))
        if abs(r - manifold.r) > 1e-6:
            raise ValueError(f"point {x1} is not on the circle of radius {manifold.r}")
        normal = x1 / manifold.r
        tangent = np.array([-x1[1], x1[0]]) / manifold.r
        return tangent[None, :], normal[None, :]
    raise TypeError(f"unknown manifold: {type(manifold).__name__}")


def spectrum_gap(report: SpectrumReport, gamma: float) -> GapReport:
    """Classify the latest-time spectrum into tangential/normal groups.

    Eigenvalues nearer to 0 than to -gamma count as tangential; the gap is
    the largest adjacent difference of the sorted mean spectrum.
    """
    eigs = report.mean[-1]
    n_tangential = int(np.sum(eigs > -gamma / 2.0))
    gap = float(np.max(-np.diff(eigs))) if eigs.size > 1 else 0.0
    return GapReport(n_tangential=n_tangential,
                     n_normal=int(eigs.size - n_tangential), gap=gap)
