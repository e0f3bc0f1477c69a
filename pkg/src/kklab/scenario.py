"""TOML scenario files: constants, field expressions, particles, run plan, output.

Expression variables are the base coordinates ``x^0..x^3`` named ``t, x, y, z``
(``y`` here is a base coordinate, not the fiber).  Numeric entries of
``[constants]`` other than the configuration keys are bound as named constants.
See ``DEFAULTS`` for every default value.
"""

from __future__ import annotations

import copy
import hashlib
import json
import keyword
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .config import ScenarioConfig
from .errors import ConfigError, ExpressionError
from .expr import CONSTANTS, FUNCTIONS, VARIABLES, compile_expression, differentiate, free_names, parse_expression
from .geometry import FieldBundle

CONFIG_KEYS = ("beta", "a0", "hbar", "epsilon", "varepsilon", "base_dim", "abs_tol", "rel_tol", "fd_step", "fiber")

DEFAULTS = {
    "constants": {"beta": 1.0, "a0": 1.0, "hbar": 0.0, "epsilon": 1, "varepsilon": 1, "base_dim": 4,
                  "abs_tol": 1e-12, "rel_tol": 1e-10, "fiber": "U1"},
    "fields": {"a": "a0", "A": None, "g0": "minkowski"},
    "run": {
        "command": "project",
        "span": 10.0,          # t_r span (project/compare/characteristic) or bundle parameter (geodesic)
        "tol": 1e-10,
        "threshold": 1e-6,     # compare: maximum accepted deviation
        "samples": 201,
        "perturb": [],         # compare: offset added to the Lorentz seed position
        "n_x": 32,             # reduce: coarsest grid / alpha grid
        "n_y": 8,
        "levels": 3,
        "cfl": 0.25,
        "duration": 1.0,
        "length": 2 * np.pi,
        "mass": 1.0,
        "method": "fd2",
        "continuation": 4,
        "alpha_tol": 1e-12,
        "modes": [],
    },
    "output": {"prefix": "", "formats": ["csv"]},
}

FAMILIES = {
    "constant": (("value",), {}),
    "sinusoidal": (("offset", "amplitude"), {"wavenumber": 1.0, "phase": 0.0}),
    "gaussian-bump": (("offset", "amplitude"), {"center": 0.0, "width": 1.0}),
    "linear": (("offset", "slope"), {}),
}


def _param(v) -> str:
    return f"({v})" if isinstance(v, str) else repr(float(v))


def expand_family(spec: dict, ctx: str) -> str:
    """Expression source for a named family table ``{family = ..., var = "x", ...}``."""
    name = spec.get("family")
    if name not in FAMILIES:
        raise ConfigError(f"{ctx}.family must be one of {sorted(FAMILIES)} (got {name!r})")
    required, optional = FAMILIES[name]
    allowed = set(required) | set(optional) | {"family", "var"}
    extra = set(spec) - allowed
    if extra:
        raise ConfigError(f"{ctx}: unknown keys {sorted(extra)} for family {name!r}")
    for k in required:
        if k not in spec:
            raise ConfigError(f"{ctx}.{k} is required for family {name!r}")
    p = {**optional, **spec}
    var = p.get("var", "x")
    if var not in VARIABLES:
        raise ConfigError(f"{ctx}.var must be one of {VARIABLES} (got {var!r})")
    P = {k: _param(v) for k, v in p.items() if k not in ("family", "var")}
    if name == "constant":
        return P["value"]
    if name == "sinusoidal":
        return f"{P['offset']} + {P['amplitude']}*sin({P['wavenumber']}*{var} + {P['phase']})"
    if name == "gaussian-bump":
        return f"{P['offset']} + {P['amplitude']}*exp(-(({var} - {P['center']})/{P['width']})^2/2)"
    return f"{P['offset']} + {P['slope']}*{var}"


@dataclass
class ScalarField:
    """Compiled expression plus its exact partial derivatives in the first ``dim`` coordinates."""

    src: str
    fn: object
    grads: tuple

    def __call__(self, p):
        return self.fn(*_pad(p))

    def grad(self, p):
        q = _pad(p)
        return np.array([g(*q) for g in self.grads])


def _pad(p):
    p = np.asarray(p, dtype=float)
    out = [0.0, 0.0, 0.0, 0.0]
    out[:p.size] = p.tolist()
    return out


def compile_component(spec, ctx: str, dim: int, constants: dict) -> ScalarField:
    if isinstance(spec, dict):
        src = expand_family(spec, ctx)
    elif isinstance(spec, (int, float)) and not isinstance(spec, bool):
        src = repr(float(spec))
    elif isinstance(spec, str):
        src = spec
    else:
        raise ConfigError(f"{ctx} must be an expression string, a number or a family table")
    try:
        tree = parse_expression(src, constants)
    except ExpressionError as exc:
        raise ConfigError(f"{ctx}: {exc}") from exc
    coords = VARIABLES[:dim]
    bad = sorted(n for n in free_names(tree) if n in VARIABLES and n not in coords)
    if bad:
        raise ConfigError(f"{ctx}: variable(s) {bad} are not coordinates of a base of dimension {dim}")
    fn = compile_expression(tree, constants=constants)
    grads = tuple(compile_expression(differentiate(tree, v), constants=constants) for v in coords)
    return ScalarField(src=src, fn=fn, grads=grads)


def _metric_spec(spec, dim: int):
    if spec == "minkowski":
        return [["1" if i == j == 0 else ("-1" if i == j else "0") for j in range(dim)] for i in range(dim)]
    if isinstance(spec, dict):
        if set(spec) != {"diag"}:
            raise ConfigError("fields.g0 table must have exactly one key 'diag'")
        diag = spec["diag"]
        if len(diag) != dim:
            raise ConfigError(f"fields.g0.diag needs {dim} entries (got {len(diag)})")
        return [[diag[i] if i == j else "0" for j in range(dim)] for i in range(dim)]
    if isinstance(spec, list) and len(spec) == dim and all(isinstance(r, list) and len(r) == dim for r in spec):
        return spec
    raise ConfigError(f"fields.g0 must be 'minkowski', {{diag = [...]}} or a {dim}x{dim} list")


def build_fields(fields_doc: dict, dim: int, constants: dict) -> FieldBundle:
    a = compile_component(fields_doc["a"], "fields.a", dim, constants)
    A_doc = fields_doc["A"]
    if len(A_doc) != dim:
        raise ConfigError(f"fields.A needs {dim} components (got {len(A_doc)})")
    A = [compile_component(c, f"fields.A[{i}]", dim, constants) for i, c in enumerate(A_doc)]
    G = _metric_spec(fields_doc["g0"], dim)
    g = [[compile_component(G[i][j], f"fields.g0[{i}][{j}]", dim, constants) for j in range(dim)]
         for i in range(dim)]
    for i in range(dim):
        for j in range(i):
            if g[i][j].src.replace(" ", "") != g[j][i].src.replace(" ", ""):
                raise ConfigError(f"fields.g0 must be symmetric: [{i}][{j}] != [{j}][{i}]")

    def A_fn(p):
        return np.array([c(p) for c in A])

    def dA_fn(p):
        return np.array([c.grad(p) for c in A]).T  # [l, n] = d_l A_n

    def g_fn(p):
        return np.array([[c(p) for c in row] for row in g])

    def dg_fn(p):
        return np.moveaxis(np.array([[c.grad(p) for c in row] for row in g]), 2, 0)

    return FieldBundle(dim=dim, a=a, A=A_fn, g0=g_fn, da=a.grad, dA=dA_fn, dg0=dg_fn)


@dataclass
class Particle:
    m: float
    q: float
    position: np.ndarray
    direction: np.ndarray
    y0: float = 0.0

    @property
    def r(self) -> float:
        return self.q / self.m


@dataclass
class Scenario:
    cfg: ScenarioConfig
    fields: FieldBundle
    particles: list
    run: dict
    output: dict
    document: dict
    constants: dict = field(default_factory=dict)
    path: Path | None = None

    @property
    def digest(self) -> str:
        blob = json.dumps(self.document, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def stem(self) -> str:
        if self.output.get("prefix"):
            return self.output["prefix"]
        return self.path.stem if self.path is not None else "scenario"


def _number(v, ctx):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{ctx} must be a number (got {v!r})")
    return v


def normalize(doc: dict) -> dict:
    """Apply defaults and type checks; returns a new document."""
    if not isinstance(doc, dict) or "constants" not in doc:
        raise ConfigError("missing section [constants]")
    unknown = set(doc) - {"constants", "fields", "particles", "run", "output"}
    if unknown:
        raise ConfigError(f"unknown section(s) {sorted(unknown)}")
    out = {}
    consts = {**DEFAULTS["constants"], **doc["constants"]}
    for k, v in consts.items():
        if k in ("fiber",):
            continue
        if k == "fd_step" and v is None:
            continue
        _number(v, f"constants.{k}")
        if k not in CONFIG_KEYS and (not k.isidentifier() or keyword.iskeyword(k) or k in VARIABLES
                                     or k in FUNCTIONS or k in CONSTANTS):
            raise ConfigError(f"constants.{k} is not a usable constant name")
    for k in ("epsilon", "varepsilon", "base_dim"):
        if float(consts[k]) != int(consts[k]):
            raise ConfigError(f"constants.{k} must be an integer (got {consts[k]!r})")
        consts[k] = int(consts[k])
    out["constants"] = consts
    dim = consts["base_dim"]

    f = {**DEFAULTS["fields"], **doc.get("fields", {})}
    extra = set(f) - {"a", "A", "g0"}
    if extra:
        raise ConfigError(f"fields: unknown keys {sorted(extra)}")
    if f["A"] is None:
        f["A"] = ["0"] * dim
    elif isinstance(f["A"], dict):
        names = VARIABLES[:dim]
        bad = set(f["A"]) - set(names)
        if bad:
            raise ConfigError(f"fields.A: unknown components {sorted(bad)} (use {names})")
        f["A"] = [f["A"].get(n, "0") for n in names]
    out["fields"] = f

    parts = []
    for i, p in enumerate(doc.get("particles", [])):
        ctx = f"particles[{i}]"
        extra = set(p) - {"m", "q", "position", "direction", "y0"}
        if extra:
            raise ConfigError(f"{ctx}: unknown keys {sorted(extra)}")
        q = {"m": 1.0, "q": 0.0, "position": [0.0] * dim, "direction": [1.0] + [0.0] * (dim - 1), "y0": 0.0, **p}
        for k in ("m", "q", "y0"):
            _number(q[k], f"{ctx}.{k}")
        for k in ("position", "direction"):
            if not isinstance(q[k], list) or len(q[k]) != dim:
                raise ConfigError(f"{ctx}.{k} must be a list of {dim} numbers")
            for j, v in enumerate(q[k]):
                _number(v, f"{ctx}.{k}[{j}]")
        if not q["m"] > 0:
            raise ConfigError(f"{ctx}.m must be > 0 (got {q['m']!r})")
        parts.append(q)
    out["particles"] = parts

    run = {**DEFAULTS["run"], **doc.get("run", {})}
    extra = set(run) - set(DEFAULTS["run"])
    if extra:
        raise ConfigError(f"run: unknown keys {sorted(extra)}")
    for k in ("span", "tol", "threshold", "cfl", "duration", "length", "mass", "alpha_tol"):
        _number(run[k], f"run.{k}")
        if not run[k] > 0:
            raise ConfigError(f"run.{k} must be > 0 (got {run[k]!r})")
    for k in ("samples", "n_x", "n_y", "levels", "continuation"):
        if not isinstance(run[k], int) or isinstance(run[k], bool) or run[k] < 1:
            raise ConfigError(f"run.{k} must be a positive integer (got {run[k]!r})")
    if run["method"] not in ("fd2", "spectral"):
        raise ConfigError(f"run.method must be 'fd2' or 'spectral' (got {run['method']!r})")
    for i, m in enumerate(run["modes"]):
        if "n" not in m or not isinstance(m["n"], int):
            raise ConfigError(f"run.modes[{i}].n must be an integer")
        extra = set(m) - {"n", "profile", "rate", "frequency"}
        if extra:
            raise ConfigError(f"run.modes[{i}]: unknown keys {sorted(extra)}")
    run["modes"] = [{"profile": "1", "rate": "0", "frequency": "0", **m} for m in run["modes"]]
    out["run"] = run

    o = {**DEFAULTS["output"], **doc.get("output", {})}
    extra = set(o) - {"dir", "prefix", "formats"}
    if extra:
        raise ConfigError(f"output: unknown keys {sorted(extra)}")
    bad = set(o["formats"]) - {"csv", "svg"}
    if bad:
        raise ConfigError(f"output.formats: unsupported {sorted(bad)}")
    out["output"] = o
    return out


def from_document(doc: dict, path: Path | None = None) -> Scenario:
    doc = normalize(copy.deepcopy(doc))
    c = doc["constants"]
    cfg_kwargs = {k: c[k] for k in CONFIG_KEYS if k in c}
    cfg = ScenarioConfig(**cfg_kwargs, fields=doc["fields"])
    bound = {k: float(v) for k, v in c.items() if k not in ("fiber", "fd_step", "base_dim", "abs_tol", "rel_tol")}
    fields = build_fields(doc["fields"], cfg.base_dim, bound)
    particles = [Particle(m=float(p["m"]), q=float(p["q"]), position=np.array(p["position"], dtype=float),
                          direction=np.array(p["direction"], dtype=float), y0=float(p["y0"]))
                 for p in doc["particles"]]
    return Scenario(cfg=cfg, fields=fields, particles=particles, run=doc["run"], output=doc["output"],
                    document=doc, constants=bound, path=path)


def loads(text: str, path: Path | None = None) -> Scenario:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"scenario is not valid TOML: {exc}") from exc
    return from_document(doc, path)


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    return loads(path.read_text(), path)


def serialize(scn: Scenario) -> str:
    return tomli_w.dumps(scn.document)
