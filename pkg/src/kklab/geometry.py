"""Base metrics, the 5D bundle metric, conformal frames, Christoffels and F = dA.

Coordinates on the bundle are ``(x^0, ..., x^{d-1}, y)`` with the fiber coordinate
last.  The bundle metric is

    g~ = varepsilon * Omega^-2 * g0 - a^2 (dy + beta A)^2

and is independent of ``y`` (cylinder condition), so ``k = d/dy`` is Killing.
Smooth (C^2) fields are assumed throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .config import ScenarioConfig, FD_STEP_DEFAULT
from .errors import DomainError, FrameError, SingularityError

DET_THRESHOLD = 1e-300

# central-difference stencils: (offsets, weights), derivative = sum(w f(x + o h)) / h
_STENCILS = {
    2: ((-1, 1), (-0.5, 0.5)),
    4: ((-2, -1, 1, 2), (1 / 12, -2 / 3, 2 / 3, -1 / 12)),
}


def fd_gradient(f: Callable, x, h: float | None = None, order: int = 4) -> np.ndarray:
    """Central-difference gradient; result has shape ``(len(x),) + shape(f(x))``."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = FD_STEP_DEFAULT * (1.0 + float(np.max(np.abs(x))))
    offsets, weights = _STENCILS[order]
    out = []
    for i in range(x.size):
        acc = 0.0
        for o, w in zip(offsets, weights):
            xs = x.copy()
            xs[i] += o * h
            acc = acc + w * np.asarray(f(xs), dtype=float)
        out.append(acc / h)
    return np.array(out)


def minkowski(dim: int) -> np.ndarray:
    return np.diag([1.0] + [-1.0] * (dim - 1))


@dataclass(frozen=True)
class FieldBundle:
    """Evaluators for the scalar field ``a``, gauge potential ``A`` and Jordan metric ``g0``.

    Optional analytic derivatives: ``da(x)[l] = d_l a``, ``dA(x)[l, n] = d_l A_n``,
    ``dg0(x)[l, m, n] = d_l g0_mn``.  Missing ones fall back to 4th-order
    central differences.
    """

    dim: int
    a: Callable
    A: Callable
    g0: Callable
    da: Optional[Callable] = None
    dA: Optional[Callable] = None
    dg0: Optional[Callable] = None
    fd_step: Optional[float] = None
    _checked: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def flat(cls, dim: int = 4, a: float = 1.0, A=None) -> "FieldBundle":
        eta = minkowski(dim)
        A_const = np.zeros(dim) if A is None else np.asarray(A, dtype=float)
        return cls(
            dim=dim,
            a=lambda x: a,
            A=lambda x: A_const,
            g0=lambda x: eta,
            da=lambda x: np.zeros(dim),
            dA=lambda x: np.zeros((dim, dim)),
            dg0=lambda x: np.zeros((dim, dim, dim)),
        )

    def _h(self, x):
        if self.fd_step is not None:
            return self.fd_step
        return FD_STEP_DEFAULT * (1.0 + float(np.max(np.abs(x))))

    def scalar(self, x) -> float:
        val = float(self.a(x))
        if not val > 0:
            raise DomainError(f"scalar field a(x) = {val} is not positive at x = {np.asarray(x).tolist()}")
        return val

    def potential(self, x) -> np.ndarray:
        return np.asarray(self.A(x), dtype=float)

    def jordan(self, x) -> np.ndarray:
        g = np.asarray(self.g0(x), dtype=float)
        if not self._checked.get("signature"):
            self.check_signature(x, g)
            self._checked["signature"] = True
        return g

    def grad_a(self, x) -> np.ndarray:
        if self.da is not None:
            return np.asarray(self.da(x), dtype=float)
        return fd_gradient(self.a, x, self._h(x))

    def jac_A(self, x) -> np.ndarray:
        if self.dA is not None:
            return np.asarray(self.dA(x), dtype=float)
        return fd_gradient(self.A, x, self._h(x))

    def grad_g0(self, x) -> np.ndarray:
        if self.dg0 is not None:
            return np.asarray(self.dg0(x), dtype=float)
        return fd_gradient(self.g0, x, self._h(x))

    def check_signature(self, x, g=None):
        """Raise unless g0(x) is symmetric with exactly one positive eigenvalue."""
        g = np.asarray(self.g0(x) if g is None else g, dtype=float)
        if g.shape != (self.dim, self.dim) or not np.allclose(g, g.T, atol=1e-14, rtol=0):
            raise DomainError(f"g0 is not a symmetric {self.dim}x{self.dim} matrix at x = {np.asarray(x).tolist()}")
        ev = np.linalg.eigvalsh(g)
        scale = max(np.max(np.abs(ev)), 1e-300)
        if np.sum(ev > 1e-12 * scale) != 1 or np.sum(ev < -1e-12 * scale) != self.dim - 1:
            raise DomainError(f"g0 is not Lorentzian (+-..-) at x = {np.asarray(x).tolist()}: eigenvalues {ev}")


@dataclass(frozen=True)
class BundleMetric:
    """The assembled (d+1)-dimensional metric with an optional conformal profile ``Omega(x)``."""

    fields: FieldBundle
    cfg: ScenarioConfig
    omega: Callable = None
    domega: Callable = None

    @property
    def dim(self) -> int:
        return self.fields.dim + 1

    def _omega(self, x):
        if self.omega is None:
            return 1.0
        w = float(self.omega(x))
        if w == 0:
            raise SingularityError(f"conformal profile vanishes at x = {np.asarray(x).tolist()}")
        return w

    def _grad_omega(self, x):
        if self.omega is None:
            return np.zeros(self.fields.dim)
        if self.domega is not None:
            return np.asarray(self.domega(x), dtype=float)
        return fd_gradient(self.omega, x, self.fields._h(x))

    def metric(self, x, y: float = 0.0) -> np.ndarray:
        return assemble_bundle_metric(self.fields, self.cfg, x, y, omega=self._omega(x))

    def inverse(self, x, y: float = 0.0) -> np.ndarray:
        return invert_bundle_metric(self, x, y)

    def frame(self, x):
        """Return ``k`` and the rows ``e_mu = d_mu - beta A_mu d_y`` as (d+1)-vectors."""
        d = self.fields.dim
        A = self.fields.potential(x)
        k = np.zeros(d + 1)
        k[d] = 1.0
        e = np.zeros((d, d + 1))
        e[:, :d] = np.eye(d)
        e[:, d] = -self.cfg.beta * A
        return k, e

    def connection_form(self, x) -> np.ndarray:
        """Components of ``dy + beta A``."""
        d = self.fields.dim
        w = np.empty(d + 1)
        w[:d] = self.cfg.beta * self.fields.potential(x)
        w[d] = 1.0
        return w

    def derivatives(self, x) -> np.ndarray:
        """``dg[s, A, B] = d_s g~_AB`` with the fiber derivative identically zero."""
        d = self.fields.dim
        f, cfg = self.fields, self.cfg
        beta, ve = cfg.beta, cfg.varepsilon
        a = f.scalar(x)
        da = f.grad_a(x)
        A = f.potential(x)
        dA = f.jac_A(x)
        g0 = f.jordan(x)
        dg0 = f.grad_g0(x)
        w = self._omega(x)
        dw = self._grad_omega(x)
        inv_w2 = 1.0 / (w * w)
        d_inv_w2 = -2.0 * dw / w ** 3

        out = np.zeros((d + 1, d + 1, d + 1))
        AA = np.outer(A, A)
        dAA = np.einsum("lm,n->lmn", dA, A) + np.einsum("m,ln->lmn", A, dA)
        out[:d, :d, :d] = ve * (d_inv_w2[:, None, None] * g0 + inv_w2 * dg0) \
            - beta ** 2 * (2 * a * da[:, None, None] * AA + a * a * dAA)
        cross = -beta * (2 * a * da[:, None] * A[None, :] + a * a * dA)
        out[:d, :d, d] = cross
        out[:d, d, :d] = cross
        out[:d, d, d] = -2 * a * da
        return out

    def christoffel(self, x) -> np.ndarray:
        return christoffel_from_derivatives(self.inverse(x), self.derivatives(x))

    def check_frame_identities(self, x, y: float = 0.0) -> dict:
        g = self.metric(x, y)
        k, e = self.frame(x)
        a = self.fields.scalar(x)
        w = self._omega(x)
        g0 = self.fields.jordan(x)
        return {
            "kk": abs(k @ g @ k + a * a),
            "ke": float(np.max(np.abs(e @ g @ k))),
            "ee": float(np.max(np.abs(e @ g @ e.T - self.cfg.varepsilon * g0 / (w * w)))),
        }


def assemble_bundle_metric(fields: FieldBundle, cfg: ScenarioConfig, x, y: float = 0.0,
                           omega: float = 1.0) -> np.ndarray:
    """Bundle metric at ``(x, y)``; ``y`` does not enter (cylinder condition)."""
    d = fields.dim
    a = fields.scalar(x)
    A = fields.potential(x)
    g0 = fields.jordan(x)
    beta = cfg.beta
    g = np.empty((d + 1, d + 1))
    g[:d, :d] = cfg.varepsilon * g0 / (omega * omega) - (a * beta) ** 2 * np.outer(A, A)
    g[:d, d] = g[d, :d] = -a * a * beta * A
    g[d, d] = -a * a
    return g


def invert_bundle_metric(bm: BundleMetric, x, y: float = 0.0) -> np.ndarray:
    """Analytic block inverse ``varepsilon Omega^2 g0^{mn} e_m (x) e_n - a^-2 d_y (x) d_y``."""
    f, cfg = bm.fields, bm.cfg
    d = f.dim
    a = f.scalar(x)
    A = f.potential(x)
    g0 = f.jordan(x)
    det0 = np.linalg.det(g0)
    if abs(det0) < DET_THRESHOLD:
        raise SingularityError(f"degenerate base metric at x = {np.asarray(x).tolist()} (det = {det0})")
    w = bm._omega(x)
    hinv = cfg.varepsilon * w * w * np.linalg.inv(g0)
    hA = hinv @ A
    beta = cfg.beta
    inv = np.empty((d + 1, d + 1))
    inv[:d, :d] = hinv
    inv[:d, d] = inv[d, :d] = -beta * hA
    inv[d, d] = beta * beta * (A @ hA) - 1.0 / (a * a)
    return inv


def christoffel_from_derivatives(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """``Gamma[l, m, n]`` from the inverse metric and ``dg[s, m, n] = d_s g_mn``."""
    t = np.transpose(dg, (1, 0, 2)) + np.transpose(dg, (2, 0, 1)) - dg
    gam = 0.5 * np.einsum("ls,smn->lmn", ginv, t)
    return 0.5 * (gam + np.transpose(gam, (0, 2, 1)))


def christoffel(metric: Callable, x, fd_step: float | None = None, order: int = 4) -> np.ndarray:
    """Christoffel symbols of a point-evaluated metric by central differences."""
    x = np.asarray(x, dtype=float)
    if fd_step is None:
        fd_step = FD_STEP_DEFAULT * (1.0 + float(np.max(np.abs(x))))

    def checked(p):
        g = np.asarray(metric(p), dtype=float)
        det = np.linalg.det(g)
        if abs(det) < DET_THRESHOLD or not np.isfinite(det):
            raise SingularityError(f"degenerate metric at stencil point {p.tolist()}")
        return g

    g = checked(x)
    dg = fd_gradient(checked, x, fd_step, order)
    return christoffel_from_derivatives(np.linalg.inv(g), dg)


def field_strength(fields: FieldBundle, x, fd_step: float | None = None) -> np.ndarray:
    """``F_mn = d_m A_n - d_n A_m`` (antisymmetric by construction)."""
    if fd_step is None or fields.dA is not None:
        J = fields.jac_A(x)
    else:
        J = fd_gradient(fields.A, x, fd_step)
    return J - J.T


# ---------------------------------------------------------------------------
# conformal frames

FRAMES = ("jordan", "einstein", "rescaled", "quantum")


@dataclass(frozen=True)
class MetricView:
    """``factor_sq(x) * g0(x)`` tagged by frame; ``grad_factor_sq`` is optional (FD fallback)."""

    frame: str
    fields: FieldBundle
    factor_sq: Callable
    grad_factor_sq: Optional[Callable] = None

    def factor(self, x) -> float:
        f2 = float(self.factor_sq(x))
        if not f2 > 0:
            raise FrameError(f"{self.frame} frame: conformal factor squared = {f2} <= 0 at x = {np.asarray(x).tolist()}")
        return f2

    def metric(self, x) -> np.ndarray:
        return self.factor(x) * self.fields.jordan(x)

    def __call__(self, x) -> np.ndarray:
        return self.metric(x)

    def inverse(self, x) -> np.ndarray:
        return np.linalg.inv(self.fields.jordan(x)) / self.factor(x)

    def derivatives(self, x) -> np.ndarray:
        f2 = self.factor(x)
        if self.grad_factor_sq is not None:
            df2 = np.asarray(self.grad_factor_sq(x), dtype=float)
        else:
            df2 = fd_gradient(self.factor_sq, x, self.fields._h(x))
        return df2[:, None, None] * self.fields.jordan(x) + f2 * self.fields.grad_g0(x)

    def christoffel(self, x) -> np.ndarray:
        return christoffel_from_derivatives(self.inverse(x), self.derivatives(x))


def omega_r_squared(cfg: ScenarioConfig, r: float, a: float) -> float:
    return cfg.epsilon + r * r / (cfg.beta * cfg.beta * a * a)


def conformal_view(fields: FieldBundle, cfg: ScenarioConfig, frame: str, profile=None) -> MetricView:
    """Build a conformally rescaled copy of g0.

    ``frame='rescaled'`` takes the charge-to-mass ratio ``r`` as ``profile``;
    ``frame='quantum'`` takes a callable ``x -> Omega^2`` (or a pair
    ``(Omega^2, grad Omega^2)``).
    """
    if frame == "jordan":
        return MetricView(frame, fields, lambda x: 1.0, lambda x: np.zeros(fields.dim))
    if frame == "einstein":
        a0 = cfg.a0
        return MetricView(frame, fields, lambda x: fields.scalar(x) / a0, lambda x: fields.grad_a(x) / a0)
    if frame == "rescaled":
        if profile is None:
            raise ValueError("rescaled frame needs the charge-to-mass ratio r")
        r = float(profile)
        b2 = cfg.beta ** 2

        def f2(x):
            return omega_r_squared(cfg, r, fields.scalar(x))

        def df2(x):
            a = fields.scalar(x)
            return -2.0 * r * r / (b2 * a ** 3) * fields.grad_a(x)

        return MetricView(frame, fields, f2, df2)
    if frame == "quantum":
        if callable(profile):
            return MetricView(frame, fields, profile, None)
        f2, df2 = profile
        return MetricView(frame, fields, f2, df2)
    raise ValueError(f"unknown frame {frame!r}; expected one of {FRAMES}")
