"""Projection of bundle geodesics onto charged-particle motion on the base.

Pipeline: read off the conserved charge-to-mass ratio ``r = beta g~(k, zdot)``,
build ``Omega_r^2 = epsilon + r^2 / (beta a)^2`` and the coupling metric
``g_r = Omega_r^2 g0``, reparametrise the projected curve by
``t_r = int Omega_r^2 dt`` and compare with a direct Lorentz-force integration
in ``g_r``.  Also holds the WKB phase clock.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .config import ScenarioConfig
from .dynamics import Trajectory, integrate_geodesic_5d, integrate_lorentz, normalize_velocity
from .errors import ComparisonError, DomainError, IntegrationError, NormalizationError
from .geometry import BundleMetric, FieldBundle, conformal_view, fd_gradient

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def extract_charge_ratio(bm: BundleMetric, z, zdot) -> float:
    """``r = beta g~(k, zdot) = -beta a^2 (ydot + beta A(xdot))``."""
    d = bm.fields.dim
    x = np.asarray(z, dtype=float)[:d]
    zdot = np.asarray(zdot, dtype=float)
    a = bm.fields.scalar(x)
    omega_form = zdot[d] + bm.cfg.beta * float(bm.fields.potential(x) @ zdot[:d])
    return -bm.cfg.beta * a * a * omega_form


def omega_r(cfg: ScenarioConfig, r: float, a: float, epsilon: int | None = None) -> float:
    """Positive root of ``epsilon + r^2 / (beta a)^2``; non-positive argument means outside the confinement region."""
    eps = cfg.epsilon if epsilon is None else epsilon
    arg = eps + r * r / (cfg.beta * cfg.beta * a * a)
    if not arg > 0:
        raise DomainError(f"epsilon + r^2/(beta a)^2 = {arg} <= 0 (a = {a}, r = {r}): outside the confinement region")
    return float(np.sqrt(arg))


def proper_time_ratio(cfg: ScenarioConfig, r: float, a: float) -> float:
    """Predicted ``dt_r / dt_0 = sqrt(1 + r^2 / (beta a)^2)`` for timelike bundle geodesics."""
    if cfg.epsilon != 1:
        raise ValueError("proper_time_ratio applies to epsilon = 1 only")
    return omega_r(cfg, r, a, 1)


def bundle_velocity(bm: BundleMetric, x, direction, r: float) -> np.ndarray:
    """Bundle velocity over base point ``x`` with base direction ``direction``,
    charge-to-mass ratio ``r`` and norm ``cfg.epsilon``."""
    f, cfg = bm.fields, bm.cfg
    x = np.asarray(x, dtype=float)
    v = np.asarray(direction, dtype=float)
    a = f.scalar(x)
    w = bm._omega(x)
    base = cfg.varepsilon * float(v @ f.jordan(x) @ v) / (w * w)
    target = cfg.epsilon + r * r / (cfg.beta ** 2 * a * a)
    if base == 0 or not target / base > 0:
        raise NormalizationError(f"base direction norm {base} incompatible with required {target}")
    xd = v * np.sqrt(target / base)
    yd = -r / (cfg.beta * a * a) - cfg.beta * float(f.potential(x) @ xd)
    return np.append(xd, yd)


@dataclass
class ProjectionResult:
    r: float
    epsilon: int
    tr: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    clocks: dict
    omega: np.ndarray
    norm_error: float
    confined: bool = False
    event: Optional[dict] = None
    geodesic: Optional[Trajectory] = None
    locate: Optional[Callable] = field(default=None, repr=False)
    notes: list = field(default_factory=list)

    def position_at(self, tr):
        return self.locate(tr)[0]

    def velocity_at(self, tr):
        return self.locate(tr)[1]


def project_and_reparametrize(geo: Trajectory, bm: BundleMetric, cfg: ScenarioConfig | None = None,
                              n_samples: int = 201, tr_grid=None) -> ProjectionResult:
    """Project a bundle geodesic to the base and resample it at uniform ``t_r``."""
    cfg = bm.cfg if cfg is None else cfg
    d = bm.fields.dim
    n = d + 1
    lay = geo.layout
    tr_end = float(geo.clocks["tr"][-1])
    r = float(geo.logs["r"][0])
    b2 = cfg.beta ** 2
    if tr_grid is None:
        tr_grid = np.linspace(0.0, tr_end, n_samples)
    tr_grid = np.asarray(tr_grid, dtype=float)
    if tr_grid[-1] > tr_end * (1 + 1e-14) + 1e-300:
        raise ValueError(f"requested t_r = {tr_grid[-1]} beyond projected span {tr_end}")

    ts = geo.param
    clock_tr = geo.clocks["tr"]

    def param_of(tr):
        if tr <= clock_tr[0]:
            return ts[0]
        if tr >= clock_tr[-1]:
            return ts[-1]
        i = int(np.searchsorted(clock_tr, tr))
        lo, hi = ts[i - 1], ts[i]
        return brentq(lambda s: geo.dense(s)[lay["tr"]] - tr, lo, hi, xtol=1e-15, rtol=1e-15)

    def locate(tr):
        s = param_of(tr)
        y = geo.dense(s)
        x = y[:d]
        xd = y[n:n + d]
        a = bm.fields.scalar(x)
        om2 = cfg.epsilon + r * r / (b2 * a * a)
        return x, xd / om2, s, y, om2

    pos, vel, tcl, t0cl, omegas, norms = [], [], [], [], [], []
    for tr in tr_grid:
        x, xp, s, y, om2 = locate(tr)
        pos.append(x)
        vel.append(xp)
        tcl.append(s)
        t0cl.append(y[lay["t0"]])
        omegas.append(np.sqrt(om2) if om2 > 0 else np.nan)
        # dx/dt_r = xdot / Omega_r^2 is 0/0 on the confinement boundary
        norms.append(om2 * float(xp @ bm.fields.jordan(x) @ xp) if om2 > 1e-6 else np.nan)
    norms = np.array(norms)
    norm_error = float(np.nanmax(np.abs(norms - 1.0))) if np.any(np.isfinite(norms)) else np.nan
    notes = []
    if np.any(~np.isfinite(norms)):
        notes.append(f"{int(np.sum(~np.isfinite(norms)))} sample(s) with Omega_r^2 < 1e-6 excluded from the norm check")
    if cfg.epsilon == 0:
        notes.append("null bundle geodesic: rescaling its affine parameter by c rescales r and t_r by c; "
                     "the projected curve is reported for the given normalisation")
    return ProjectionResult(
        r=r,
        epsilon=cfg.epsilon,
        tr=tr_grid,
        position=np.array(pos),
        velocity=np.array(vel),
        clocks={"t": np.array(tcl), "t0": np.array(t0cl), "tr": tr_grid.copy()},
        omega=np.array(omegas),
        norm_error=norm_error,
        confined=geo.event is not None,
        event=geo.event,
        geodesic=geo,
        locate=lambda tr: locate(tr)[:2],
        notes=notes,
    )


@dataclass
class DeviationReport:
    position: float
    velocity: float
    clock_t: float
    clock_t0: float
    span: float
    samples: int
    lorentz: Optional[Trajectory] = None

    @property
    def max_deviation(self) -> float:
        return max(self.position, self.velocity)


def compare_with_lorentz(pr: ProjectionResult, fields: FieldBundle, cfg: ScenarioConfig, tol: float = 1e-10,
                         x0=None, u0=None) -> DeviationReport:
    """Integrate the Lorentz force equation in ``g_r`` from the projected initial data
    and measure sup-norm deviations on the common ``t_r`` samples.

    ``x0``/``u0`` override the seed (used for negative controls).
    """
    view = conformal_view(fields, cfg, "rescaled", pr.r)
    span = float(pr.tr[-1] - pr.tr[0])
    if not span > 0:
        raise ComparisonError("projected trajectory has no t_r extent")
    moved = x0 is not None or u0 is not None
    x0 = pr.position[0] if x0 is None else np.asarray(x0, dtype=float)
    u0 = pr.velocity[0] if u0 is None else np.asarray(u0, dtype=float)
    if moved:
        u0 = normalize_velocity(view, x0, u0, 1.0)
    try:
        lfe = integrate_lorentz(view, fields, pr.r, x0, u0, span, tol=tol, norm_tol=1e-9)
    except IntegrationError as exc:
        raise ComparisonError(f"Lorentz integration ended before the common span: {exc}") from exc
    if abs(lfe.param[-1] - span) > 1e-12 * max(1.0, span):
        raise ComparisonError(f"span mismatch: Lorentz run reached {lfe.param[-1]}, projection spans {span}")
    taus = pr.tr - pr.tr[0]
    states = np.array([lfe.dense(t) for t in taus])
    d = fields.dim
    dpos = np.max(np.abs(states[:, :d] - pr.position))
    dvel = np.max(np.abs(states[:, d:2 * d] - pr.velocity))
    dt = np.max(np.abs(states[:, 2 * d] - (pr.clocks["t"] - pr.clocks["t"][0])))
    dt0 = np.max(np.abs(states[:, 2 * d + 1] - (pr.clocks["t0"] - pr.clocks["t0"][0])))
    return DeviationReport(float(dpos), float(dvel), float(dt), float(dt0), span, len(taus), lfe)


def uniform_field_motion(E: float, r: float, omega: float, x0, u0, tau):
    """Closed-form Lorentz motion in ``g = omega^2 * Minkowski`` with the uniform
    field ``F_{tx} = E`` (potential ``A_t = -E x``), ``omega`` constant.

    Returns positions and velocities (``d x / d tau``) at proper times ``tau``.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    kappa = r * E / omega ** 2
    ut, ux = u0[0], u0[1]
    amp = np.sqrt(ut * ut - ux * ux)
    phi0 = np.arctanh(ux / ut)
    arg = kappa * tau + phi0
    pos = np.tile(x0, (tau.size, 1)).astype(float)
    vel = np.tile(u0, (tau.size, 1)).astype(float)
    if kappa == 0:
        pos += np.outer(tau, u0)
        return pos, vel
    pos[:, 0] += amp * (np.sinh(arg) - np.sinh(phi0)) / kappa
    pos[:, 1] += amp * (np.cosh(arg) - np.cosh(phi0)) / kappa
    vel[:, 0] = amp * np.cosh(arg)
    vel[:, 1] = amp * np.sinh(arg)
    if x0.size > 2:
        pos[:, 2:] += np.outer(tau, u0[2:])
    return pos, vel


def clock_table(geo: Trajectory, bm: BundleMetric) -> dict:
    """Per accepted step: clock increments and the predicted ratio ``dt_r/dt_0``.

    The prediction is the ``t_0``-weighted mean of ``sqrt(eps + r^2/(beta a)^2)``
    over the step, i.e. ``int Omega^2 dt / int Omega dt``, by 16-point
    Gauss-Legendre on the dense output.
    """
    cfg = bm.cfg
    d = bm.fields.dim
    r = float(geo.logs["r"][0])
    b2 = cfg.beta ** 2
    ts = geo.param
    dtr = np.diff(geo.clocks["tr"])
    dt0 = np.diff(geo.clocks["t0"])
    pred = np.empty(len(ts) - 1)
    point = np.empty(len(ts) - 1)
    for i in range(len(ts) - 1):
        lo, hi = ts[i], ts[i + 1]
        s = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
        om2 = np.array([cfg.epsilon + r * r / (b2 * bm.fields.scalar(geo.dense(si)[:d]) ** 2) for si in s])
        pred[i] = np.sum(_GL_WEIGHTS * om2) / np.sum(_GL_WEIGHTS * np.sqrt(om2))
        xm = geo.dense(0.5 * (lo + hi))[:d]
        point[i] = np.sqrt(cfg.epsilon + r * r / (b2 * bm.fields.scalar(xm) ** 2))
    return {"t": ts, "dt": np.diff(ts), "dt0": dt0, "dtr": dtr, "ratio": dtr / dt0,
            "predicted": pred, "midpoint": point}


def phase_clock(traj: Trajectory, fields: FieldBundle, q: float, m: float, gauge=None, view=None,
                gauge_grad=None) -> dict:
    """Accumulated gauge-invariant phase ``int (dS - q A)`` along a Lorentz trajectory.

    The canonical momentum ``P = p + q A`` and the potential term are integrated
    separately (16-point Gauss-Legendre per accepted step), so a gauge change
    ``A -> A + d chi`` moves both and must cancel in the difference.
    """
    if view is None:
        view = conformal_view(fields, _unit_cfg(fields), "jordan")
    if gauge is not None and gauge_grad is None:
        gauge_grad = lambda x: fd_gradient(gauge, x)  # noqa: E731

    def potential(x):
        A = fields.potential(x)
        if gauge_grad is not None:
            A = A + np.asarray(gauge_grad(x), dtype=float)
        return A

    ts = traj.param
    canonical = 0.0
    coupling = 0.0
    for i in range(len(ts) - 1):
        lo, hi = ts[i], ts[i + 1]
        half = 0.5 * (hi - lo)
        for node, w in zip(_GL_NODES, _GL_WEIGHTS):
            s = half * node + 0.5 * (hi + lo)
            x = traj.position_at(s)
            u = traj.velocity_at(s)
            p = m * view.metric(x) @ u
            Au = float(potential(x) @ u)
            canonical += w * half * (float(p @ u) + q * Au)
            coupling += w * half * q * Au
    elapsed = float(ts[-1] - ts[0])
    return {"phase": canonical - coupling, "canonical": canonical, "coupling": coupling, "elapsed": elapsed}


def _unit_cfg(fields):
    return ScenarioConfig(base_dim=fields.dim)


def geodesic_to_tr(bm: BundleMetric, x0, direction, r: float, tr_target: float, y0: float = 0.0,
                   tol: float = 1e-10, growth: float = 1.3, max_tries: int = 40) -> Trajectory:
    """Integrate a bundle geodesic long enough that its projection reaches ``t_r = tr_target``.

    The bundle parameter span starts at ``tr_target / Omega_r^2`` (initial point) and
    grows geometrically.  A confinement event ends the search early.
    """
    v0 = bundle_velocity(bm, x0, direction, r)
    om2 = bm.cfg.epsilon + r * r / (bm.cfg.beta ** 2 * bm.fields.scalar(np.asarray(x0, dtype=float)) ** 2)
    span = tr_target / max(abs(om2), 1e-12)
    for _ in range(max_tries):
        geo = integrate_geodesic_5d(bm, x0, y0, v0, span, tol=tol)
        if geo.clocks["tr"][-1] >= tr_target or geo.truncated:
            return geo
        span *= growth
    raise IntegrationError(f"t_r = {tr_target} not reached after {max_tries} span extensions", partial=geo)
