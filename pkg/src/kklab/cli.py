"""``kk`` command-line entry point and the per-command runners.

Exit codes: 0 success, 1 unexpected failure, otherwise the ``exit_code`` of the
raised error class (configuration 2, domain 3, singularity 4, normalisation 5,
integration 6, non-convergence 7, comparison 8).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import reduction as red
from .dynamics import integrate_characteristic, integrate_geodesic_5d, integrate_lorentz
from .errors import ComparisonError, ConfigError, DomainError, KKError
from .expr import compile_expression, parse_expression
from .geometry import BundleMetric, conformal_view
from .io import read_csv, svg_line_plot, write_csv
from .projection import (bundle_velocity, clock_table, compare_with_lorentz, geodesic_to_tr,
                         project_and_reparametrize)
from .scenario import Scenario, load_scenario

OUT_ENV = "KK_OUT_DIR"
COMMANDS = ("geodesic", "project", "compare", "characteristic", "reduce", "alpha", "plot")


class Runner:
    def __init__(self, scn: Scenario, out_dir: Path, tol: float | None = None, seed: int = 0, echo=print):
        self.scn = scn
        self.cfg = scn.cfg
        self.out = Path(out_dir)
        self.tol = float(scn.run["tol"] if tol is None else tol)
        self.seed = seed
        self.echo = echo
        self.written: list[Path] = []

    # -- helpers ---------------------------------------------------------
    def meta(self, **extra) -> dict:
        return {"config_hash": self.scn.digest, "abs_tol": self.cfg.abs_tol, "rel_tol": self.cfg.rel_tol,
                "tol": self.tol, **extra}

    def csv(self, name: str, header, rows, **extra) -> Path:
        p = write_csv(self.out / f"{self.scn.stem}_{name}.csv", header, rows, self.meta(**extra))
        self.written.append(p)
        if "svg" in self.scn.output["formats"]:
            svg = plot_csv(p)
            if svg is not None:
                self.written.append(svg)
        return p

    def particles(self):
        if not self.scn.particles:
            raise ConfigError("[particles] is empty; command needs at least one particle")
        return self.scn.particles

    def coord_names(self, prefix: str):
        return [f"{prefix}{i}" for i in range(self.cfg.base_dim)]

    def projected(self, bm, p):
        span = self.scn.run["span"]
        geo = geodesic_to_tr(bm, p.position, p.direction, p.r, span, y0=p.y0, tol=self.tol)
        tr_end = min(span, float(geo.clocks["tr"][-1]))
        grid = np.linspace(0.0, tr_end, self.scn.run["samples"])
        return geo, project_and_reparametrize(geo, bm, tr_grid=grid)

    # -- commands --------------------------------------------------------
    def geodesic(self) -> int:
        bm = BundleMetric(self.scn.fields, self.cfg)
        for i, p in enumerate(self.particles()):
            v0 = bundle_velocity(bm, p.position, p.direction, p.r)
            geo = integrate_geodesic_5d(bm, p.position, p.y0, v0, self.scn.run["span"], tol=self.tol)
            rows = [[s, *geo.position[k], *geo.velocity[k], geo.clocks["t0"][k], geo.clocks["tr"][k],
                     geo.logs["norm"][k] - self.cfg.epsilon, geo.logs["r"][k]] for k, s in enumerate(geo.param)]
            header = ["s", *self.coord_names("x"), "y", *self.coord_names("v"), "vy", "t0", "tr", "norm_err", "r"]
            self.csv(f"geodesic_p{i}", header, rows, particle=i)
            msg = (f"particle {i}: {len(geo.param)} steps, |norm - eps| <= {geo.drift('norm', self.cfg.epsilon):.3e}, "
                   f"relative r drift {geo.drift('r', relative=True):.3e}")
            if geo.event is not None:
                msg += f", confinement boundary at s = {geo.event['param']:.12g}"
            self.echo(msg)
        return 0

    def project(self) -> int:
        bm = BundleMetric(self.scn.fields, self.cfg)
        for i, p in enumerate(self.particles()):
            geo, pr = self.projected(bm, p)
            rows = [[pr.tr[k], pr.clocks["t"][k], pr.clocks["t0"][k], *pr.position[k], *pr.velocity[k], pr.omega[k]]
                    for k in range(len(pr.tr))]
            header = ["tr", "t", "t0", *self.coord_names("x"), *self.coord_names("u"), "omega_r"]
            self.csv(f"project_p{i}", header, rows, particle=i, r=pr.r)
            ct = clock_table(geo, bm)
            dev = np.abs(ct["ratio"] - ct["predicted"])
            rows = [[ct["t"][k + 1], ct["dt"][k], ct["dt0"][k], ct["dtr"][k], ct["ratio"][k], ct["predicted"][k],
                     dev[k]] for k in range(len(dev))]
            self.csv(f"clocks_p{i}", ["t", "dt", "dt0", "dtr", "ratio", "predicted", "deviation"], rows,
                     particle=i, r=pr.r)
            msg = (f"particle {i}: r = {pr.r:.12g}, t_r reached {pr.tr[-1]:.12g}, "
                   f"norm error {pr.norm_error:.3e}, clock-law deviation {np.max(dev):.3e}")
            if pr.event is not None:
                msg += f", confined (boundary at bundle parameter {pr.event['param']:.12g})"
            self.echo(msg)
            for note in pr.notes:
                self.echo(f"  note: {note}")
        return 0

    def compare(self) -> int:
        bm = BundleMetric(self.scn.fields, self.cfg)
        threshold = self.scn.run["threshold"]
        perturb = np.asarray(self.scn.run["perturb"], dtype=float)
        rows, worst = [], 0.0
        for i, p in enumerate(self.particles()):
            _, pr = self.projected(bm, p)
            x0 = None
            if perturb.size:
                if perturb.size != self.cfg.base_dim:
                    raise ConfigError(f"run.perturb needs {self.cfg.base_dim} entries")
                x0 = pr.position[0] + perturb
            rep = compare_with_lorentz(pr, self.scn.fields, self.cfg, tol=self.tol, x0=x0)
            dev = rep.max_deviation
            worst = max(worst, dev)
            rows.append([i, pr.r, rep.span, rep.position, rep.velocity, rep.clock_t, rep.clock_t0, dev,
                         threshold, dev <= threshold])
            self.echo(f"particle {i}: deviation position {rep.position:.3e} velocity {rep.velocity:.3e} "
                      f"clocks {rep.clock_t:.3e}/{rep.clock_t0:.3e} (threshold {threshold:g})")
        header = ["particle", "r", "span", "position", "velocity", "clock_t", "clock_t0", "max", "threshold", "pass"]
        self.csv("compare", header, rows, threshold=threshold)
        if worst > threshold:
            raise ComparisonError(f"deviation {worst:.3e} exceeds threshold {threshold:g}")
        return 0

    def characteristic(self) -> int:
        span = self.scn.run["span"]
        for i, p in enumerate(self.particles()):
            view = conformal_view(self.scn.fields, self.cfg, "rescaled", p.r)
            x0 = p.position
            nrm = float(p.direction @ view.metric(x0) @ p.direction)
            if not nrm > 0:
                raise DomainError(f"particles[{i}].direction is not timelike in the coupling metric")
            u0 = p.direction / np.sqrt(nrm)
            ch = integrate_characteristic(view, self.scn.fields, p.q, p.m, x0, p.m * u0, span, tol=self.tol,
                                          shell_tol=1e-10 * p.m ** 2)
            lf = integrate_lorentz(view, self.scn.fields, p.r, x0, u0, span, tol=self.tol, norm_tol=1e-10)
            grid = np.linspace(0.0, span, self.scn.run["samples"])
            rows, dmax = [], 0.0
            for s in grid:
                xc = ch.position_at(s)
                pc = ch.state_at(s)[ch.layout["mom"]]
                xl = lf.position_at(s)
                shell = float(pc @ view.metric(xc) @ pc) - p.m ** 2
                dev = float(np.max(np.abs(xc - xl)))
                dmax = max(dmax, dev)
                rows.append([s, *xc, *pc, shell, dev])
            header = ["s", *self.coord_names("x"), *self.coord_names("p"), "shell_err", "lfe_deviation"]
            self.csv(f"characteristic_p{i}", header, rows, particle=i, q=p.q, m=p.m)
            self.echo(f"particle {i}: characteristic vs velocity form, max position deviation {dmax:.3e}")
        return 0

    def _initial_modes(self):
        modes = self.scn.run["modes"]
        if modes:
            return modes
        rng = np.random.default_rng(self.seed)
        out = []
        for n in (0, 1, -1, 2):
            c = rng.uniform(-0.5, 0.5, 3)
            out.append({"n": n, "profile": f"exp({c[0]:.6f}*cos(x) + {c[1]:.6f}*sin(2*x))",
                        "rate": "0", "frequency": f"{1 + abs(c[2]):.6f}"})
        return out

    def reduce(self) -> int:
        run = self.scn.run
        cfg = self.cfg
        modes = self._initial_modes()
        fns = {}
        for k, m in enumerate(modes):
            for key in ("profile", "rate", "frequency"):
                tree = parse_expression(str(m[key]), self.scn.constants)
                fns[k, key] = compile_expression(tree, constants=self.scn.constants, backend="numpy")
        table, spectrum = [], []
        prev = {}
        for level in range(run["levels"]):
            n_x = run["n_x"] * 2 ** level
            lat = red.sample_static(self.scn.fields, n_x, run["length"])
            n_y = run["n_y"]
            y = 2 * np.pi * np.arange(n_y) / n_y
            X, Y = np.meshgrid(lat.x, y, indexing="ij")
            psi0 = np.zeros_like(X, dtype=complex)
            dpsi = np.zeros_like(X, dtype=complex)
            for k, m in enumerate(modes):
                prof = fns[k, "profile"](0.0, X, 0.0, 0.0)
                rate = fns[k, "rate"](0.0, X, 0.0, 0.0) - 1j * fns[k, "frequency"](0.0, X, 0.0, 0.0)
                psi0 += prof * np.exp(1j * m["n"] * Y)
                dpsi += rate * prof * np.exp(1j * m["n"] * Y)
            steps = max(2, int(round(run["duration"] / (run["cfl"] * lat.h))))
            h_t = run["duration"] / steps
            grid = red.ModeGrid.initial(lat, n_y, h_t, run["mass"], psi0, dpsi, cfg=cfg)
            grid = red.evolve_kg_bundle(grid, None, cfg, steps)
            spec = red.fourier_decompose(grid, cfg)
            for n in sorted({m["n"] for m in modes}):
                mode = spec.mode(n)
                try:
                    prof = red.solve_alpha(None, cfg, mode.q, run["mass"], lattice=lat, method="fd2",
                                           tol=run["alpha_tol"], continuation=run["continuation"])
                    res = red.mode_kg_residual(mode, prof, None, cfg)
                except DomainError as exc:
                    self.echo(f"mode n = {n}: no positive alpha profile ({exc})")
                    res = float("nan")
                ratio = prev[n] / res if n in prev and res > 0 else float("nan")
                prev[n] = res
                table.append([level, n_x, lat.h, h_t, n, mode.q, mode.l2_norm(), res, ratio])
                if level == run["levels"] - 1:
                    spectrum.append([n, mode.q, mode.l2_norm(), res])
        header = ["level", "n_x", "h_x", "h_t", "n", "q", "l2_norm", "residual", "ratio"]
        self.csv("reduce", header, table, seed=self.seed, n_y=run["n_y"])
        self.csv("spectrum", ["n", "q", "l2_norm", "residual"], spectrum, seed=self.seed)
        for row in table:
            if row[0] > 0:
                self.echo(f"n = {row[4]:+d}  n_x = {row[1]:4d}  residual {row[7]:.3e}  ratio {row[8]:.3f}")
        return 0

    def alpha(self) -> int:
        run = self.scn.run
        lat = red.sample_static(self.scn.fields, run["n_x"], run["length"])
        targets = [(p.q, p.m) for p in self.scn.particles] or [(0.0, run["mass"])]
        for i, (q, m) in enumerate(targets):
            prof = red.solve_alpha(None, self.cfg, q, m, lattice=lat, method=run["method"], tol=run["alpha_tol"],
                                   continuation=run["continuation"])
            classical = red.classical_alpha(lat, self.cfg, q, m)
            omr = np.sqrt(np.abs(self.cfg.epsilon + (q / m) ** 2 / (self.cfg.beta ** 2 * lat.a ** 2)))
            res = red.omega_qm_residual(prof, None, self.cfg)
            rows = [[lat.x[k], lat.a[k], prof.alpha[k], classical[k], prof.omega()[k], omr[k]] for k in range(lat.n)]
            self.csv(f"alpha_p{i}", ["x", "a", "alpha", "alpha_classical", "omega_qm", "omega_r"], rows,
                     q=q, m=m, hbar=self.cfg.hbar, method=run["method"], iterations=prof.iterations,
                     omega_residual=res)
            self.echo(f"q = {q:g}, m = {m:g}: {prof.iterations} Newton iterations, "
                      f"max |alpha - classical| {np.max(np.abs(prof.alpha - classical)):.3e}, "
                      f"conformal-factor residual {res:.3e}")
        return 0

    def plot(self) -> int:
        found = sorted(self.out.glob(f"{self.scn.stem}_*.csv"))
        if not found:
            raise ConfigError(f"no CSV output for {self.scn.stem!r} in {self.out}; run another command first")
        for p in found:
            svg = plot_csv(p)
            if svg is not None:
                self.written.append(svg)
                self.echo(f"wrote {svg}")
        return 0


_PLOTS = {
    "geodesic": ("s", ["x1", "y"], False, False),
    "project": ("tr", ["x1", "t", "t0"], False, False),
    "clocks": ("t", ["ratio", "predicted"], False, False),
    "characteristic": ("s", ["x1", "lfe_deviation"], False, False),
    "alpha": ("x", ["alpha", "alpha_classical", "omega_qm", "omega_r"], False, False),
    "spectrum": ("n", ["l2_norm"], False, False),
}


def plot_csv(path: Path) -> Path | None:
    path = Path(path)
    _, _, cols = read_csv(path)
    name = next((k for k in ("geodesic", "project", "clocks", "characteristic", "alpha", "spectrum", "reduce")
                 if f"_{k}" in path.stem), None)
    if name is None:
        return None
    out = path.with_suffix(".svg")
    if name == "reduce":
        series = []
        for n in np.unique(cols["n"]):
            sel = cols["n"] == n
            series.append((f"n = {int(n)}", cols["h_x"][sel], cols["residual"][sel]))
        return svg_line_plot(out, series, "h_x", "residual", path.stem, logx=True, logy=True)
    xcol, ycols, lx, ly = _PLOTS[name]
    series = [(c, cols[xcol], cols[c]) for c in ycols if c in cols]
    return svg_line_plot(out, series, xcol, ", ".join(c for c, _, _ in series), path.stem, logx=lx, logy=ly)


def run_command(scn: Scenario, command: str, out_dir, tol: float | None = None, seed: int = 0, echo=print) -> int:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    runner = Runner(scn, Path(out_dir), tol=tol, seed=seed, echo=echo)
    return getattr(runner, command)()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kk", description="Bundle geodesics, projections and field reductions.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--scenario", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None,
                        help=f"output directory (default: ${OUT_ENV} or ./kk_out)")
        sp.add_argument("--tol", type=float, default=None, help="integrator tolerance (overrides run.tol)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    echo = (lambda *a, **k: None) if args.quiet else print
    try:
        scn = load_scenario(args.scenario)
        out = args.out or Path(scn.output.get("dir") or os.environ.get(OUT_ENV, "kk_out"))
        return run_command(scn, args.command, out, tol=args.tol, seed=args.seed, echo=echo)
    except KKError as exc:
        print(f"kk {args.command}: {args.scenario}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
