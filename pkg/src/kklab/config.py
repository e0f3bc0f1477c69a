from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import json

import numpy as np

from .errors import ConfigError

FD_STEP_DEFAULT = float(np.finfo(float).eps) ** (1.0 / 3.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Global constants of a run (units with c = 1).

    ``epsilon`` is the causal type of the bundle curve / field normalisation,
    ``varepsilon`` the sign folded into the base block of the bundle metric.
    ``fd_step=None`` selects the position-scaled default ``eps**(1/3) * (1 + |x|)``.
    """

    beta: float = 1.0
    a0: float = 1.0
    hbar: float = 0.0
    epsilon: int = 1
    varepsilon: int = 1
    base_dim: int = 4
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    fd_step: float | None = None
    fiber: str = "U1"
    fields: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = [
            ("beta", self.beta > 0, "must be > 0"),
            ("a0", self.a0 > 0, "must be > 0"),
            ("hbar", self.hbar >= 0, "must be >= 0"),
            ("epsilon", self.epsilon in (-1, 0, 1), "must be one of -1, 0, 1"),
            ("varepsilon", self.varepsilon in (-1, 1), "must be -1 or 1"),
            ("base_dim", self.base_dim in (2, 3, 4), "must be 2, 3 or 4"),
            ("abs_tol", self.abs_tol > 0, "must be > 0"),
            ("rel_tol", self.rel_tol > 0, "must be > 0"),
            ("fd_step", self.fd_step is None or self.fd_step > 0, "must be > 0"),
            ("fiber", self.fiber in ("U1", "T1"), "must be 'U1' or 'T1'"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(f"constants.{key} {msg} (got {getattr(self, key)!r})")

    def step_for(self, x) -> float:
        if self.fd_step is not None:
            return self.fd_step
        return FD_STEP_DEFAULT * (1.0 + float(np.max(np.abs(x))))

    def digest(self) -> str:
        payload = {k: getattr(self, k) for k in ("beta", "a0", "hbar", "epsilon", "varepsilon", "base_dim",
                                                   "abs_tol", "rel_tol", "fd_step", "fiber")}
        payload["fields"] = self.fields
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
