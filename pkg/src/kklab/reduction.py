"""Klein-Gordon fields on the bundle, fiber Fourier reduction and the alpha profile.

Lattice: uniform periodic grid in ``x`` (period ``length``), uniform steps in ``t``,
``n_y`` points on a fiber of period ``2*pi``.  Fields are static and depend on ``x``
only.  The base is a planar-symmetric 3+1 spacetime, i.e. ``g0 = diag(g_tt(x),
g_xx(x), -1, -1)`` with the two transverse directions trivial; only ``(t, x)`` are
discretised.  The reduced equations below use that four-dimensional measure.

Sign conventions: ``hbar^2 Box~ Psi + epsilon m^2 Psi = 0`` on the bundle and
``D^mu D_mu psi + m^2 psi = 0`` (``D = hbar d - i q A``) on the base, both with the
mostly-minus signature.  Fiber mode ``n`` carries charge ``q = n hbar beta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .config import ScenarioConfig
from .errors import ConfigError, DomainError, NonConvergenceError
from .geometry import FieldBundle


# ---------------------------------------------------------------------------
# static field samples

@dataclass(frozen=True)
class StaticLattice:
    """Field values on nodes ``x_i`` and half nodes ``x_{i+1/2}`` of a periodic grid."""

    x: np.ndarray
    length: float
    a: np.ndarray
    a_half: np.ndarray
    At: np.ndarray
    Ax_half: np.ndarray
    gtt: np.ndarray
    gxx: np.ndarray
    gtt_half: np.ndarray
    gxx_half: np.ndarray

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def h(self) -> float:
        return self.length / self.x.size

    @property
    def vol(self) -> np.ndarray:
        return np.sqrt(self.gtt * -self.gxx)

    @property
    def vol_half(self) -> np.ndarray:
        return np.sqrt(self.gtt_half * -self.gxx_half)

    def refined(self, fields, factor: int = 2) -> "StaticLattice":
        return sample_static(fields, self.n * factor, self.length)


def _point(dim: int, x: float, t: float = 0.0) -> np.ndarray:
    p = np.zeros(dim)
    p[0], p[1] = t, x
    return p


def sample_static(fields: FieldBundle, n_x: int, length: float = 2 * np.pi) -> StaticLattice:
    """Sample ``a``, ``A`` and ``g0`` on a periodic grid; rejects non-static or non-planar data."""
    if n_x < 4:
        raise ConfigError(f"grid.n_x must be >= 4 (got {n_x})")
    if fields.dim not in (2, 4):
        raise ConfigError(f"reduction needs a 2- or 4-dimensional base description (got {fields.dim})")
    h = length / n_x
    x = h * np.arange(n_x)
    xh = x + 0.5 * h

    def sample(xs):
        a, At, Ax, gtt, gxx = [], [], [], [], []
        for xi in xs:
            p = _point(fields.dim, xi)
            g = fields.jordan(p)
            A = fields.potential(p)
            for t in (1.0, -0.7):
                q = _point(fields.dim, xi, t)
                if (abs(fields.scalar(q) - fields.scalar(p)) > 1e-12 * max(1.0, abs(fields.scalar(p)))
                        or not np.allclose(fields.potential(q), A, atol=1e-12, rtol=1e-12)
                        or not np.allclose(fields.jordan(q), g, atol=1e-12, rtol=1e-12)):
                    raise ConfigError("reduction requires static fields (no t dependence)")
            off = g - np.diag(np.diag(g))
            if np.max(np.abs(off)) > 1e-12:
                raise ConfigError("reduction requires a diagonal g0")
            if fields.dim == 4:
                if not np.allclose(np.diag(g)[2:], -1.0, atol=1e-12) or np.max(np.abs(A[2:])) > 1e-12:
                    raise ConfigError("reduction requires trivial transverse directions (g0 = -1, A = 0 there)")
            a.append(fields.scalar(p))
            At.append(A[0])
            Ax.append(A[1])
            gtt.append(g[0, 0])
            gxx.append(g[1, 1])
        return [np.asarray(v, dtype=float) for v in (a, At, Ax, gtt, gxx)]

    a, At, _, gtt, gxx = sample(x)
    a_h, _, Ax_h, gtt_h, gxx_h = sample(xh)
    if np.any(gtt <= 0) or np.any(gxx >= 0):
        raise DomainError("g0 must have g_tt > 0 and g_xx < 0 on the lattice")
    return StaticLattice(x=x, length=float(length), a=a, a_half=a_h, At=At, Ax_half=Ax_h,
                         gtt=gtt, gxx=gxx, gtt_half=gtt_h, gxx_half=gxx_h)


def covariant_divergence(psi: np.ndarray, c_half: np.ndarray, theta: np.ndarray, h: float) -> np.ndarray:
    """``(d - i b A)(c (d - i b A) psi)`` with gauge links ``exp(-i theta)``, periodic in the last axis.

    ``theta[..., i]`` is the link phase ``b * A_x(x_{i+1/2}) * h``.
    """
    link = np.exp(-1j * theta)
    flux = c_half * (link * np.roll(psi, -1, axis=-1) - psi)
    return (flux - np.conj(np.roll(link, 1, axis=-1)) * np.roll(flux, 1, axis=-1)) / h ** 2


# ---------------------------------------------------------------------------
# bundle lattice

def fiber_numbers(n_y: int) -> np.ndarray:
    return np.rint(np.fft.fftfreq(n_y, 1.0 / n_y)).astype(int)


@dataclass
class ModeGrid:
    """State of a bundle field on the ``(t, x, y)`` lattice.

    ``psi`` and ``psi_prev`` hold the two most recent time levels, shape ``(n_x, n_y)``.
    ``history`` collects recorded levels starting at ``t0``.
    """

    lattice: StaticLattice
    n_y: int
    h_t: float
    mass: float
    psi: np.ndarray
    psi_prev: np.ndarray
    t: float = 0.0
    t0: float = 0.0
    history: list = field(default_factory=list)

    @property
    def y(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_y) / self.n_y

    @property
    def h_y(self) -> float:
        return 2 * np.pi / self.n_y

    @property
    def modes(self) -> np.ndarray:
        return fiber_numbers(self.n_y)

    def snapshots(self) -> np.ndarray:
        return np.asarray(self.history)

    @classmethod
    def initial(cls, lattice: StaticLattice, n_y: int, h_t: float, mass: float,
                psi0: np.ndarray, dpsi0: np.ndarray, fields=None, cfg: ScenarioConfig | None = None,
                psi_prev: np.ndarray | None = None) -> "ModeGrid":
        """Start from ``Psi(0)`` and ``dPsi/dt(0)``.

        The level at ``-h_t`` is built from a second-order Taylor step using the
        lattice operator (needs ``cfg``), unless ``psi_prev`` is supplied.
        """
        psi0 = np.asarray(psi0, dtype=complex)
        if psi0.shape != (lattice.n, n_y):
            raise ConfigError(f"initial data must have shape {(lattice.n, n_y)} (got {psi0.shape})")
        grid = cls(lattice=lattice, n_y=n_y, h_t=float(h_t), mass=float(mass), psi=psi0.copy(),
                   psi_prev=psi0.copy(), history=[psi0.copy()])
        if psi_prev is not None:
            grid.psi_prev = np.asarray(psi_prev, dtype=complex).copy()
            return grid
        if cfg is None:
            raise ConfigError("cfg is required to build the starting level")
        op = _BundleOperator(lattice, n_y, cfg, mass, h_t)
        hat = np.fft.fft(psi0, axis=1).T / n_y
        dhat = np.fft.fft(np.asarray(dpsi0, dtype=complex), axis=1).T / n_y
        # D_t^2 psi = -(K + M) psi / (varepsilon g^tt),   D_t = d_t - i w
        w = op.w_t / h_t
        d2 = -op.apply(hat) * op.inv_tt
        # psi(-h) = psi - h psi_t + h^2/2 psi_tt,  psi_tt = D_t^2 psi + 2 i w psi_t + w^2 psi
        tt = d2 + 2j * w * dhat + w ** 2 * hat
        prev = hat - h_t * dhat + 0.5 * h_t ** 2 * tt
        grid.psi_prev = np.fft.ifft(prev.T * n_y, axis=1)
        return grid


class _BundleOperator:
    """Per-mode spatial part ``K_n + M_n`` of the bundle wave operator and time links."""

    def __init__(self, lat: StaticLattice, n_y: int, cfg: ScenarioConfig, mass: float, h_t: float):
        if cfg.hbar <= 0:
            raise ConfigError("constants.hbar must be > 0 for field evolution")
        n = fiber_numbers(n_y)[:, None].astype(float)
        vp = cfg.varepsilon
        s = lat.a * lat.vol
        s_half = lat.a_half * lat.vol_half
        self.c_half = s_half * vp / lat.gxx_half
        self.inv_s = 1.0 / s
        self.theta = cfg.beta * n * lat.Ax_half * lat.h
        self.w_t = cfg.beta * n * lat.At * h_t
        self.M = n ** 2 / lat.a ** 2 + cfg.epsilon * mass ** 2 / cfg.hbar ** 2
        self.inv_tt = lat.gtt / vp  # 1 / (varepsilon g^tt)
        self.h = lat.h
        self.n = n

    def apply(self, hat: np.ndarray) -> np.ndarray:
        return self.inv_s * covariant_divergence(hat, self.c_half, self.theta, self.h) + self.M * hat

    def max_frequency_sq(self) -> float:
        # Gershgorin bound of the per-mode operator divided by varepsilon g^tt
        cp = np.abs(self.c_half)
        cm = np.roll(cp, 1)
        spatial = self.inv_s * (cp + cm) * 2 / self.h ** 2
        return float(np.max(np.abs(self.inv_tt) * (spatial + np.maximum(self.varsign() * self.M, 0.0))))

    def varsign(self):
        return np.sign(self.inv_tt)


def cfl_limit(lat: StaticLattice, n_y: int, cfg: ScenarioConfig, mass: float) -> float:
    """Largest stable ``h_t`` for the leapfrog scheme (bound from the operator norm)."""
    op = _BundleOperator(lat, n_y, cfg, mass, 1.0)
    return 2.0 / np.sqrt(op.max_frequency_sq())


def evolve_kg_bundle(grid: ModeGrid, fields, cfg: ScenarioConfig, steps: int, record_every: int = 1) -> ModeGrid:
    """Advance the bundle field by ``steps`` leapfrog steps; returns a new grid.

    Time links ``exp(+-i beta n A_t h_t)`` make the second difference gauge covariant,
    the update is explicit.  ``fields`` may be ``None`` when the lattice is already sampled.
    """
    lat = grid.lattice if fields is None else sample_static(fields, grid.lattice.n, grid.lattice.length)
    op = _BundleOperator(lat, grid.n_y, cfg, grid.mass, grid.h_t)
    if grid.h_t ** 2 * op.max_frequency_sq() >= 4.0:
        raise ConfigError(
            f"grid.h_t = {grid.h_t:g} violates the CFL bound {2 / np.sqrt(op.max_frequency_sq()):g}")
    if steps < 0:
        raise ConfigError("steps must be >= 0")
    rot = np.exp(1j * op.w_t)
    cur = np.fft.fft(grid.psi, axis=1).T / grid.n_y
    prev = np.fft.fft(grid.psi_prev, axis=1).T / grid.n_y
    hist = list(grid.history)
    scale = grid.h_t ** 2 * op.inv_tt
    for k in range(1, steps + 1):
        nxt = rot * (2 * cur - rot * prev - scale * op.apply(cur))
        prev, cur = cur, nxt
        if record_every and k % record_every == 0:
            hist.append(np.fft.ifft(cur.T * grid.n_y, axis=1))
    return replace(grid, lattice=lat,
                   psi=np.fft.ifft(cur.T * grid.n_y, axis=1),
                   psi_prev=np.fft.ifft(prev.T * grid.n_y, axis=1),
                   t=grid.t + steps * grid.h_t, history=hist)


# ---------------------------------------------------------------------------
# Fourier reduction

@dataclass(frozen=True)
class ModeField:
    """One fiber mode ``psibar_n(t_k, x_i)`` with charge ``q = n hbar beta``."""

    n: int
    q: float
    values: np.ndarray  # (n_t, n_x)
    h_t: float
    lattice: StaticLattice

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values[-1]) ** 2) * self.lattice.h))


@dataclass(frozen=True)
class ModeSpectrum:
    n: np.ndarray
    q: np.ndarray
    coeffs: np.ndarray  # (n_modes, n_t, n_x)
    h_t: float
    lattice: StaticLattice

    def mode(self, n: int) -> ModeField:
        idx = np.flatnonzero(self.n == n)
        if idx.size == 0:
            raise ConfigError(f"mode n = {n} is not resolved by the fiber grid")
        i = int(idx[0])
        return ModeField(n=int(n), q=float(self.q[i]), values=self.coeffs[i], h_t=self.h_t, lattice=self.lattice)


def fourier_decompose(grid: ModeGrid, cfg: ScenarioConfig) -> ModeSpectrum:
    """``psibar_n = (1/N_y) sum_j Psi(y_j) exp(-i n y_j)`` for every recorded level."""
    snaps = grid.snapshots()
    coeffs = np.fft.fft(snaps, axis=2) / grid.n_y
    n = fiber_numbers(grid.n_y)
    return ModeSpectrum(n=n, q=n * cfg.hbar * cfg.beta, coeffs=np.moveaxis(coeffs, 2, 0),
                        h_t=grid.h_t, lattice=grid.lattice)


def fourier_reconstruct(spec: ModeSpectrum) -> np.ndarray:
    return np.fft.ifft(np.moveaxis(spec.coeffs, 0, 2) * spec.n.size, axis=2)


def read_charge(values: np.ndarray, y: np.ndarray, cfg: ScenarioConfig) -> float:
    """Charge from the fiber phase winding of a single-mode profile ``Psi(y)``."""
    phase = np.unwrap(np.angle(values))
    slope = np.polyfit(y, phase, 1)[0]
    return float(slope * cfg.hbar * cfg.beta)


# ---------------------------------------------------------------------------
# alpha profile

@dataclass(frozen=True)
class AlphaProfile:
    x: np.ndarray
    alpha: np.ndarray
    q: float
    m: float
    hbar: float
    method: str
    lattice: StaticLattice
    varepsilon: int
    a0: float
    iterations: int = 0
    history: tuple = ()

    @property
    def coupling_factor(self) -> np.ndarray:
        """``|Omega_(q,m)^2|``: ``g_(q,m) = coupling_factor * g0``."""
        return self.alpha ** 2 * self.lattice.a / (self.m ** 2 * self.a0)

    @property
    def omega_sq(self) -> np.ndarray:
        return self.varepsilon * self.coupling_factor

    def omega(self) -> np.ndarray:
        return np.sqrt(self.coupling_factor)


def potential_coefficient(lat: StaticLattice, cfg: ScenarioConfig, q: float, m: float) -> np.ndarray:
    """``varepsilon (a0/a) [epsilon m^2 + q^2/(beta^2 a^2)]`` on the nodes."""
    k = cfg.epsilon * m ** 2 + q ** 2 / (cfg.beta ** 2 * lat.a ** 2)
    return cfg.varepsilon * cfg.a0 / lat.a * k


def classical_alpha(lat: StaticLattice, cfg: ScenarioConfig, q: float, m: float) -> np.ndarray:
    c = potential_coefficient(lat, cfg, q, m)
    if np.any(c <= 0):
        i = int(np.argmin(c))
        raise DomainError(f"classical alpha^2 = {c[i]:g} <= 0 at x = {lat.x[i]:g}; no positive profile")
    return np.sqrt(c)


def _fourier_derivative_matrix(n: int, length: float) -> np.ndarray:
    k = 2 * np.pi / length * np.fft.fftfreq(n, 1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    eye = np.eye(n)
    return np.real(np.fft.ifft(1j * k[:, None] * np.fft.fft(eye, axis=0), axis=0))


def einstein_laplacian(lat: StaticLattice, cfg: ScenarioConfig, method: str = "fd2"):
    """Matrix of ``Box_E`` acting on static profiles: ``(a0/a) (1/(a vol)) d_x(a vol g^xx d_x)``."""
    w = cfg.a0 / lat.a / (lat.a * lat.vol)
    n, h = lat.n, lat.h
    if method == "fd2":
        c = lat.a_half * lat.vol_half / lat.gxx_half
        cm = np.roll(c, 1)
        main = -(c + cm) / h ** 2
        rows = np.arange(n)
        data = np.concatenate([main, c / h ** 2, cm / h ** 2])
        cols = np.concatenate([rows, (rows + 1) % n, (rows - 1) % n])
        L = scipy.sparse.csr_matrix((data, (np.tile(rows, 3), cols)), shape=(n, n))
        return scipy.sparse.diags(w) @ L
    if method == "spectral":
        D = _fourier_derivative_matrix(n, lat.length)
        c = lat.a * lat.vol / lat.gxx
        return w[:, None] * (D @ (c[:, None] * D))
    raise ConfigError(f"run.method must be 'fd2' or 'spectral' (got {method!r})")


def alpha_residual(alpha, lat, cfg, q, m, method="fd2", box=None) -> np.ndarray:
    box = einstein_laplacian(lat, cfg, method) if box is None else box
    return cfg.hbar ** 2 * (box @ alpha) + potential_coefficient(lat, cfg, q, m) * alpha - alpha ** 3


def _newton(alpha, lat, cfg, q, m, method, tol, max_iter, floor):
    box = einstein_laplacian(lat, cfg, method)
    c = potential_coefficient(lat, cfg, q, m)
    sparse = scipy.sparse.issparse(box)
    F = alpha_residual(alpha, lat, cfg, q, m, box=box)
    hist = [float(np.max(np.abs(F)))]
    it = 0
    while hist[-1] > tol:
        if it >= max_iter:
            raise NonConvergenceError(f"alpha Newton did not reach {tol:g} in {max_iter} iterations", hist)
        diag = c - 3 * alpha ** 2
        if sparse:
            J = (cfg.hbar ** 2 * box + scipy.sparse.diags(diag)).tocsc()
            step = scipy.sparse.linalg.spsolve(J, -F)
        else:
            J = cfg.hbar ** 2 * box + np.diag(diag)
            step = scipy.linalg.solve(J, -F)
        lam = 1.0
        while True:
            trial = alpha + lam * step
            if np.all(trial > floor * alpha):
                Ft = alpha_residual(trial, lat, cfg, q, m, box=box)
                if np.max(np.abs(Ft)) <= (1 - 1e-4 * lam) * hist[-1] or np.max(np.abs(Ft)) <= tol:
                    break
            lam *= 0.5
            if lam < 1e-8:
                raise NonConvergenceError("alpha Newton line search stagnated", hist)
        alpha, F = trial, Ft
        hist.append(float(np.max(np.abs(F))))
        it += 1
    return alpha, it, hist


def solve_alpha(fields, cfg: ScenarioConfig, q: float, m: float, n_x: int = 128, length: float = 2 * np.pi,
                initial=None, tol: float = 1e-12, method: str = "fd2", continuation: int = 4,
                max_iter: int = 50, floor: float = 0.1, lattice: StaticLattice | None = None) -> AlphaProfile:
    """Positive static solution of ``hbar^2 Box_E alpha + C alpha - alpha^3 = 0`` (periodic in x).

    Without ``initial`` the solve starts from the ``hbar = 0`` root ``sqrt(C)`` and
    walks ``hbar`` up in ``continuation`` stages.  With ``initial`` (array or callable
    of x) a single Newton solve runs at the target ``hbar``.  Each accepted step keeps
    ``alpha > floor * alpha_previous``, which excludes the trivial root.
    """
    lat = lattice if lattice is not None else sample_static(fields, n_x, length)
    seed = classical_alpha(lat, cfg, q, m)
    hist_all: list = []
    iters = 0
    if initial is not None:
        guess = initial(lat.x) if callable(initial) else np.asarray(initial, dtype=float)
        guess = np.broadcast_to(np.asarray(guess, dtype=float), lat.x.shape).copy()
        if np.any(guess <= 0):
            raise DomainError("initial alpha guess must be positive")
        alpha, iters, hist_all = _newton(guess, lat, cfg, q, m, method, tol, max_iter, floor)
    elif cfg.hbar == 0:
        alpha = seed
        hist_all = [float(np.max(np.abs(alpha_residual(alpha, lat, cfg, q, m, method))))]
    else:
        alpha = seed
        stages = list(np.linspace(0, cfg.hbar, max(1, continuation) + 1)[1:])
        done = 0.0
        while stages:
            hb = stages[0]
            try:
                alpha_new, it, hist = _newton(alpha, lat, replace(cfg, hbar=float(hb)), q, m,
                                              method, tol, max_iter, floor)
            except NonConvergenceError as exc:
                if hb - done < cfg.hbar * 1e-6:
                    raise NonConvergenceError(f"continuation stalled at hbar = {hb:g}", exc.history) from exc
                stages.insert(0, 0.5 * (done + hb))
                continue
            stages.pop(0)
            alpha, done = alpha_new, hb
            iters += it
            hist_all.extend(hist)
    return AlphaProfile(x=lat.x, alpha=alpha, q=float(q), m=float(m), hbar=cfg.hbar, method=method,
                        lattice=lat, varepsilon=cfg.varepsilon, a0=cfg.a0, iterations=iters,
                        history=tuple(hist_all))


def _ddx(f: np.ndarray, lat: StaticLattice, method: str) -> np.ndarray:
    if method == "spectral":
        k = 2 * np.pi / lat.length * np.fft.fftfreq(lat.n, 1.0 / lat.n)
        if lat.n % 2 == 0:
            k[lat.n // 2] = 0.0
        return np.real(np.fft.ifft(1j * k * np.fft.fft(f)))
    return (np.roll(f, -1) - np.roll(f, 1)) / (2 * lat.h)


def omega_qm_residual(profile: AlphaProfile, fields, cfg: ScenarioConfig, method: str | None = None) -> float:
    """Max-norm residual of the conformal-factor equation written in ``g_(q,m)`` variables."""
    lat = profile.lattice
    method = profile.method if method is None else method
    W = profile.coupling_factor
    L = np.log(W / lat.a)
    k = cfg.epsilon * profile.m ** 2 + profile.q ** 2 / (cfg.beta ** 2 * lat.a ** 2)
    if method == "fd2":
        Wh = 0.5 * (W + np.roll(W, -1))
        flux = Wh * lat.vol_half / lat.gxx_half * (np.roll(L, -1) - L) / lat.h
        div = (flux - np.roll(flux, 1)) / lat.h
        dL = _ddx(L, lat, "fd2")
    else:
        dL = _ddx(L, lat, method)
        div = _ddx(W * lat.vol / lat.gxx * dL, lat, method)
    box = div / (W ** 2 * lat.vol)
    grad_sq = dL ** 2 / (lat.gxx * W)
    res = (-0.5 * cfg.hbar ** 2 * box + 0.25 * cfg.hbar ** 2 * grad_sq
           - cfg.varepsilon * k / W + profile.m ** 2)
    return float(np.max(np.abs(res)))


def conformal_box_defect(f: Callable, omega_sq: Callable, a: Callable, a0: float, t_range, x_range,
                         n: int = 64, gtt: Callable | None = None, gxx: Callable | None = None) -> float:
    """Max over interior nodes of ``Box_g f - |a/(a0 W)| (Box_E f + g_E^{mu nu} dL d f)``.

    Here ``g = W g0`` with ``W = |Omega^2|``, ``g_E = (a/a0) g0`` and ``L = ln(W/a)``; all
    callables take ``(t, x)``.  The planar four-dimensional measure is used.
    """
    gtt = gtt or (lambda t, x: np.ones_like(t))
    gxx = gxx or (lambda t, x: -np.ones_like(t))
    t = np.linspace(*t_range, n + 1)
    x = np.linspace(*x_range, n + 1)
    ht, hx = t[1] - t[0], x[1] - x[0]
    T, X = np.meshgrid(t, x, indexing="ij")
    F = f(T, X)
    W = np.abs(omega_sq(T, X))
    A = a(T, X)
    G0t, G0x = gtt(T, X), gxx(T, X)
    vol0 = np.sqrt(G0t * -G0x)

    def box(conf):
        # (1/sqrt g) d_mu(sqrt g g^{mu nu} d_nu f), metric conf * g0, four dimensions
        sq = conf ** 2 * vol0
        wt, wx = sq / (conf * G0t), sq / (conf * G0x)
        wt_h = 0.5 * (wt[1:, :] + wt[:-1, :])
        wx_h = 0.5 * (wx[:, 1:] + wx[:, :-1])
        ft = wt_h * np.diff(F, axis=0) / ht
        fx = wx_h * np.diff(F, axis=1) / hx
        out = np.zeros_like(F)
        out[1:-1, 1:-1] = (np.diff(ft, axis=0)[:, 1:-1] / ht + np.diff(fx, axis=1)[1:-1, :] / hx) / sq[1:-1, 1:-1]
        return out

    L = np.log(W / A)
    dLt, dLx = np.gradient(L, ht, hx)
    dft, dfx = np.gradient(F, ht, hx)
    cE = A / a0
    grad = (dLt * dft / G0t + dLx * dfx / G0x) / cE
    lhs = box(W)
    rhs = cE / W * (box(cE) + grad)
    return float(np.max(np.abs((lhs - rhs)[1:-1, 1:-1])))


# ---------------------------------------------------------------------------
# reduced Klein-Gordon residual

def reduced_kg_operator(psi: np.ndarray, n: int, W: np.ndarray, lat: StaticLattice, cfg: ScenarioConfig,
                        m: float, h_t: float) -> np.ndarray:
    """``D^mu D_mu psi + m^2 psi`` in ``g = W g0`` on interior time levels of ``psi[(t, x)]``."""
    b = cfg.beta * n
    rot = np.exp(1j * b * lat.At * h_t)
    dtt = (np.conj(rot) * psi[2:] - 2 * psi[1:-1] + rot * psi[:-2]) / h_t ** 2
    Wh = 0.5 * (W + np.roll(W, -1))
    c_half = Wh * lat.vol_half / lat.gxx_half
    theta = b * lat.Ax_half * lat.h
    spatial = covariant_divergence(psi[1:-1], c_half, theta, lat.h)
    box = (W * lat.vol / lat.gtt * dtt + spatial) / (W ** 2 * lat.vol)
    return cfg.hbar ** 2 * box + m ** 2 * psi[1:-1]


def mode_kg_residual(mode: ModeField, profile: AlphaProfile, fields, cfg: ScenarioConfig,
                     relative: bool = False) -> float:
    """Discrete L2 residual (over interior time levels) of the reduced equation for ``psi = psibar / alpha``."""
    lat = mode.lattice
    if profile.alpha.shape != (lat.n,):
        raise ConfigError("alpha profile and mode live on different grids")
    psi = mode.values / profile.alpha[None, :]
    if psi.shape[0] < 3:
        raise ConfigError("residual needs at least three time levels")
    R = reduced_kg_operator(psi, mode.n, profile.coupling_factor, lat, cfg, profile.m, mode.h_t)
    w = mode.h_t * lat.h
    res = float(np.sqrt(np.sum(np.abs(R) ** 2) * w))
    if relative:
        scale = float(np.sqrt(np.sum(np.abs(psi[1:-1]) ** 2) * w)) * profile.m ** 2
        return res / scale if scale > 0 else res
    return res
