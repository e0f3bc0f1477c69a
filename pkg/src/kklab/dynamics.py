"""Geodesics on the bundle, the Lorentz force equation and its momentum form.

All integrators drive scipy's DOP853 (embedded 8(5,3) pair with 7th-order dense
output) one step at a time so that a failure keeps the partial trajectory and
boundary events are located on the dense output.  Conserved quantities are only
logged, never projected back.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import DOP853, OdeSolution
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError, IntegrationError, NormalizationError, KKError
from .geometry import BundleMetric, MetricView, field_strength


@dataclass(frozen=True)
class ParticleSpec:
    m: float
    q: float
    epsilon: int = 1

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("mass must be >= 0")
        if self.epsilon not in (-1, 0, 1):
            raise ValueError("epsilon must be -1, 0 or 1")

    @property
    def r(self) -> float:
        if self.m == 0:
            raise ZeroDivisionError("charge-to-mass ratio undefined for m = 0")
        return self.q / self.m


@dataclass
class Trajectory:
    """Accepted-step samples plus the dense interpolant of the full state.

    ``clocks`` maps ``'t'``, ``'t0'``, ``'tr'`` to per-sample values; ``logs``
    holds monitored invariants (``'norm'``, ``'r'``, ``'base_norm'`` or
    ``'shell'``).  ``dense(s)`` returns the augmented state at parameter ``s``.
    """

    kind: str
    param: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    clocks: dict
    logs: dict
    dense: Optional[Callable] = None
    layout: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    event: Optional[dict] = None
    status: str = "complete"

    @property
    def truncated(self) -> bool:
        return self.event is not None

    def state_at(self, s):
        return self.dense(s)

    def position_at(self, s):
        y = self.dense(s)
        return y[self.layout["pos"]]

    def velocity_at(self, s):
        y = self.dense(s)
        if "mom" in self.layout:
            return y[self.layout["mom"]] / self.meta["m"]
        return y[self.layout["vel"]]

    def drift(self, key: str, target: float | None = None, relative: bool = False) -> float:
        vals = np.asarray(self.logs[key])
        ref = vals[0] if target is None else target
        dev = np.max(np.abs(vals - ref))
        if relative:
            return dev / max(abs(ref), 1e-300)
        return float(dev)


# ---------------------------------------------------------------------------
# driver


def _touch(event, dense, lo, hi, touch_tol):
    """Interior minimum of ``event`` on one step if it dips to ``touch_tol`` without crossing."""
    s = np.linspace(lo, hi, 9)
    g = np.array([event(si, dense(si)) for si in s])
    k = int(np.argmin(g))
    if g[k] > 1e3 * touch_tol:
        return None
    res = minimize_scalar(lambda si: event(si, dense(si)), bounds=(s[max(k - 1, 0)], s[min(k + 1, 8)]),
                          method="bounded", options={"xatol": 1e-14 * max(1.0, abs(hi))})
    return float(res.x) if res.fun <= touch_tol else None


def _drive(fun, s0, y0, s_end, rtol, atol, event=None, max_step=np.inf, first_step=None, touch_tol=None):
    """Integrate with DOP853; return ``(ts, ys, interpolants, event, error)``.

    ``event(s, y)`` is located when it changes sign between accepted steps;
    the trajectory is then truncated at the root.  With ``touch_tol`` a step
    whose interior minimum of ``event`` falls to ``touch_tol`` without a sign
    change is treated as a tangential contact at that minimum.
    """
    ts, ys, interps = [s0], [np.array(y0, dtype=float)], []
    found, error = None, None
    try:
        solver = DOP853(fun, s0, y0, s_end, rtol=rtol, atol=atol, max_step=max_step,
                        first_step=first_step)
    except KKError as exc:
        return ts, ys, interps, None, exc
    g_prev = event(s0, y0) if event is not None else None
    while solver.status == "running":
        try:
            msg = solver.step()
        except KKError as exc:
            error = exc
            break
        if solver.status == "failed":
            error = IntegrationError(f"integration failed at s = {solver.t}: {msg}")
            break
        dense = solver.dense_output()
        if event is not None:
            g_new = event(solver.t, solver.y)
            if np.sign(g_new) != np.sign(g_prev) and g_prev != 0:
                root = brentq(lambda s: event(s, dense(s)), solver.t_old, solver.t,
                              xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
                y_root = dense(root)
                ts.append(root)
                ys.append(y_root)
                interps.append(dense)
                found = {"param": root, "state": y_root, "tangent": False}
                break
            if touch_tol is not None:
                root = _touch(event, dense, solver.t_old, solver.t, touch_tol)
                if root is not None:
                    y_root = dense(root)
                    ts.append(root)
                    ys.append(y_root)
                    interps.append(dense)
                    found = {"param": root, "state": y_root, "tangent": True}
                    break
            g_prev = g_new
        ts.append(solver.t)
        ys.append(solver.y.copy())
        interps.append(dense)
    return ts, ys, interps, found, error


def _dense_callable(ts, interps):
    if not interps:
        y_only = None
        return lambda s: y_only
    sol = OdeSolution(np.array(ts), interps)
    return sol


def _tolerances(n_dyn, n_clock, tol, abs_tol=None):
    rtol = tol
    atol = np.full(n_dyn + n_clock, tol if abs_tol is None else abs_tol)
    # clock increments are small compared with accumulated values; keep them tight
    atol[n_dyn:] = min(tol, 1e-14) if abs_tol is None else min(abs_tol, 1e-14)
    return rtol, atol


# ---------------------------------------------------------------------------
# velocity normalisation


def normalize_velocity(metric, x, direction, target: float = 1.0) -> np.ndarray:
    """Positive multiple of ``direction`` whose norm under ``metric(x)`` is ``target``.

    ``metric`` is a BundleMetric, a MetricView, or a callable returning a matrix.
    """
    G = metric.metric(x) if hasattr(metric, "metric") else np.asarray(metric(x), dtype=float)
    v = np.asarray(direction, dtype=float)
    n = float(v @ G @ v)
    scale = float(np.max(np.abs(G))) * float(v @ v)
    if target == 0:
        if abs(n) > 1e-14 * max(scale, 1e-300):
            raise NormalizationError(f"cannot rescale a non-null direction (norm {n}) to norm 0")
        return v.copy()
    if n == 0 or np.sign(n) != np.sign(target):
        raise NormalizationError(f"direction has norm {n}; cannot rescale to {target}")
    v = v * np.sqrt(target / n)
    # one refinement pass against rounding in the first rescale
    n = float(v @ G @ v)
    return v * np.sqrt(target / n)


# ---------------------------------------------------------------------------
# 5D geodesics


def _geodesic_rhs(bm: BundleMetric):
    d = bm.fields.dim
    n = d + 1
    cfg = bm.cfg
    beta2 = cfg.beta ** 2

    def rhs(s, y):
        z, zd = y[:n], y[n:2 * n]
        x = z[:d]
        gam = bm.christoffel(x)
        acc = -np.einsum("lmn,m,n->l", gam, zd, zd)
        g = bm.metric(x)
        xd = zd[:d]
        base = float(xd @ bm.fields.jordan(x) @ xd)
        r = cfg.beta * float(g[d] @ zd)
        a = bm.fields.scalar(x)
        out = np.empty_like(y)
        out[:n] = zd
        out[n:2 * n] = acc
        out[2 * n] = np.sqrt(abs(base))
        out[2 * n + 1] = cfg.epsilon + r * r / (beta2 * a * a)
        return out

    return rhs


def geodesic_invariants(bm: BundleMetric, z, zd):
    d = bm.fields.dim
    x = z[:d]
    g = bm.metric(x)
    xd = zd[:d]
    return {
        "norm": float(zd @ g @ zd),
        "r": bm.cfg.beta * float(g[d] @ zd),
        "base_norm": float(xd @ bm.fields.jordan(x) @ xd),
    }


def integrate_geodesic_5d(bm: BundleMetric, x0, y0: float, v0, span: float, tol: float | None = None,
                          max_step: float = np.inf, check_norm: bool = True) -> Trajectory:
    """Integrate the bundle geodesic equation from ``(x0, y0)`` with velocity ``v0``.

    ``v0`` must already be normalised to ``cfg.epsilon`` (see ``normalize_velocity``).
    For ``epsilon = -1`` the run stops at the confinement boundary where
    ``Omega_r^2 = -1 + r^2/(beta a)^2`` changes sign, or touches zero
    (``event["tangent"]``, e.g. zero spatial momentum); the event is recorded.
    """
    cfg = bm.cfg
    tol = cfg.rel_tol if tol is None else tol
    d = bm.fields.dim
    n = d + 1
    z0 = np.append(np.asarray(x0, dtype=float), y0)
    v0 = np.asarray(v0, dtype=float)
    inv0 = geodesic_invariants(bm, z0, v0)
    if check_norm and abs(inv0["norm"] - cfg.epsilon) > 1e-10 * max(1.0, abs(inv0["norm"])):
        raise NormalizationError(f"initial velocity has norm {inv0['norm']}, expected {cfg.epsilon}")
    state0 = np.concatenate([z0, v0, [0.0, 0.0]])
    rtol, atol = _tolerances(2 * n, 2, tol)

    event = None
    if cfg.epsilon == -1:
        b2 = cfg.beta ** 2

        def event(s, y):
            z, zd = y[:n], y[n:2 * n]
            r = cfg.beta * float(bm.metric(z[:d])[d] @ zd)
            return -1.0 + r * r / (b2 * bm.fields.scalar(z[:d]) ** 2)

        if event(0.0, state0) <= 0:
            raise DomainError("epsilon = -1 start point lies outside the confinement region a < r/beta")

    ts, ys, interps, found, error = _drive(_geodesic_rhs(bm), 0.0, state0, float(span), rtol, atol,
                                           event=event, max_step=max_step,
                                           touch_tol=None if event is None else 1e-10)
    traj = _assemble_geodesic(bm, ts, ys, interps, found)
    if error is not None:
        traj.status = "failed"
        raise IntegrationError(f"geodesic integration stopped at s = {ts[-1]}: {error}", partial=traj) from error
    return traj


def _assemble_geodesic(bm, ts, ys, interps, found):
    d = bm.fields.dim
    n = d + 1
    ys = np.array(ys)
    logs = {"norm": [], "r": [], "base_norm": []}
    for y in ys:
        bm.fields.check_signature(y[:d])
        inv = geodesic_invariants(bm, y[:n], y[n:2 * n])
        for k in logs:
            logs[k].append(inv[k])
    ts = np.array(ts)
    return Trajectory(
        kind="geodesic5d",
        param=ts,
        position=ys[:, :n],
        velocity=ys[:, n:2 * n],
        clocks={"t": ts.copy(), "t0": ys[:, 2 * n], "tr": ys[:, 2 * n + 1]},
        logs={k: np.array(v) for k, v in logs.items()},
        dense=_dense_callable(ts, interps),
        layout={"pos": slice(0, n), "vel": slice(n, 2 * n), "t0": 2 * n, "tr": 2 * n + 1, "dim": n},
        meta={"epsilon": bm.cfg.epsilon, "r": logs["r"][0] if logs["r"] else None},
        event=found,
        status="truncated" if found is not None else "complete",
    )


# ---------------------------------------------------------------------------
# Lorentz force equation (velocity form)


def integrate_lorentz(view: MetricView, fields, r: float, x0, u0, span: float, tol: float = 1e-10,
                      max_step: float = np.inf, norm_tol: float = 1e-12) -> Trajectory:
    """Solve ``D u / d tau = r g^{-1} F u`` in the metric of ``view`` with ``g(u, u) = 1``.

    The parameter is the proper time of ``view`` (``t_r`` for the rescaled frame).
    Clocks: ``t`` accumulates ``d tau / factor^2`` and ``t0`` the Jordan line element.
    """
    d = fields.dim
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    n0 = float(u0 @ view.metric(x0) @ u0)
    if abs(n0 - 1.0) > norm_tol:
        raise NormalizationError(f"initial velocity has {view.frame}-norm {n0}, expected 1")

    def rhs(s, y):
        x, u = y[:d], y[d:2 * d]
        gam = view.christoffel(x)
        F = field_strength(fields, x)
        acc = -np.einsum("lmn,m,n->l", gam, u, u) + r * view.inverse(x) @ (F @ u)
        out = np.empty_like(y)
        out[:d] = u
        out[d:2 * d] = acc
        out[2 * d] = 1.0 / view.factor(x)
        out[2 * d + 1] = np.sqrt(abs(float(u @ fields.jordan(x) @ u)))
        return out

    state0 = np.concatenate([x0, u0, [0.0, 0.0]])
    rtol, atol = _tolerances(2 * d, 2, tol)
    ts, ys, interps, found, error = _drive(rhs, 0.0, state0, float(span), rtol, atol, max_step=max_step)
    ys = np.array(ys)
    ts = np.array(ts)
    norms = np.array([float(y[d:2 * d] @ view.metric(y[:d]) @ y[d:2 * d]) for y in ys])
    for y in ys:
        fields.check_signature(y[:d])
    traj = Trajectory(
        kind="lorentz",
        param=ts,
        position=ys[:, :d],
        velocity=ys[:, d:2 * d],
        clocks={"t": ys[:, 2 * d], "t0": ys[:, 2 * d + 1], "tr": ts.copy()},
        logs={"norm": norms, "r": np.full(len(ts), float(r))},
        dense=_dense_callable(ts, interps),
        layout={"pos": slice(0, d), "vel": slice(d, 2 * d), "t": 2 * d, "t0": 2 * d + 1, "dim": d},
        meta={"r": float(r), "frame": view.frame},
    )
    if error is not None:
        traj.status = "failed"
        raise IntegrationError(f"Lorentz integration stopped at tau = {ts[-1]}: {error}", partial=traj) from error
    return traj


# ---------------------------------------------------------------------------
# characteristic system (momentum form)


def integrate_characteristic(view: MetricView, fields, q: float, m: float, x0, p0, span: float,
                             tol: float = 1e-10, epsilon: int = 1, shell_tol: float = 1e-12,
                             max_step: float = np.inf) -> Trajectory:
    """Propagate ``(x, p)`` with ``dx/ds = p/m`` and ``Dp/ds = (q/m) F p`` (index raised by ``view``).

    The kinematical momentum must start on the mass shell ``p.p = epsilon m^2``.
    """
    if not m > 0:
        raise ValueError("characteristic integration needs m > 0")
    d = fields.dim
    x0 = np.asarray(x0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    shell0 = float(p0 @ view.metric(x0) @ p0)
    if abs(shell0 - epsilon * m * m) > shell_tol:
        raise IntegrationError(f"initial momentum off mass shell: p.p = {shell0}, expected {epsilon * m * m}")

    def rhs(s, y):
        x, p = y[:d], y[d:]
        gam = view.christoffel(x)
        F = field_strength(fields, x)
        out = np.empty_like(y)
        out[:d] = p / m
        out[d:] = (-np.einsum("lmn,m,n->l", gam, p, p) + q * view.inverse(x) @ (F @ p)) / m
        return out

    state0 = np.concatenate([x0, p0])
    ts, ys, interps, found, error = _drive(rhs, 0.0, state0, float(span), tol, np.full(2 * d, tol),
                                           max_step=max_step)
    ys = np.array(ys)
    ts = np.array(ts)
    shell = np.array([float(y[d:] @ view.metric(y[:d]) @ y[d:]) for y in ys])
    traj = Trajectory(
        kind="characteristic",
        param=ts,
        position=ys[:, :d],
        velocity=ys[:, d:] / m,
        clocks={"t": np.full(len(ts), np.nan), "t0": np.full(len(ts), np.nan), "tr": ts.copy()},
        logs={"shell": shell, "norm": shell / (m * m)},
        dense=_dense_callable(ts, interps),
        layout={"pos": slice(0, d), "mom": slice(d, 2 * d), "dim": d},
        meta={"q": q, "m": m, "epsilon": epsilon, "frame": view.frame},
    )
    if error is not None:
        traj.status = "failed"
        raise IntegrationError(f"characteristic integration stopped at s = {ts[-1]}: {error}",
                               partial=traj) from error
    return traj
