import numpy as np
import pytest
from hypothesis import settings

from kklab.config import ScenarioConfig
from kklab.geometry import FieldBundle, minkowski

settings.register_profile("kk", max_examples=40, deadline=None)
settings.load_profile("kk")


def sinusoidal_fields(dim=4, amp=0.2, E=0.1, a0=1.0):
    """a = a0 (1 + amp sin x^1), A_0 = E x^1, flat g0, exact derivatives."""
    eta = minkowski(dim)

    def a(x):
        return a0 * (1 + amp * np.sin(x[1]))

    def da(x):
        g = np.zeros(dim)
        g[1] = a0 * amp * np.cos(x[1])
        return g

    def A(x):
        v = np.zeros(dim)
        v[0] = E * x[1]
        return v

    def dA(x):
        J = np.zeros((dim, dim))
        J[1, 0] = E
        return J

    return FieldBundle(dim, a, A, lambda x: eta, da, dA, lambda x: np.zeros((dim, dim, dim)))


def wavy_fields(dim=3):
    """Generic smooth fields with a non-flat Jordan metric (numerical derivatives)."""

    def a(x):
        return 1.2 + 0.3 * np.sin(x[1] + 0.5 * x[0])

    def A(x):
        v = np.zeros(dim)
        v[0] = 0.2 * np.cos(x[1])
        v[1] = 0.1 * x[0] * np.sin(x[-1])
        if dim > 2:
            v[2] = 0.05 * x[1] ** 2
        return v

    def g0(x):
        g = minkowski(dim)
        g[0, 0] = 1 + 0.2 * np.sin(x[1]) ** 2
        g[1, 1] = -(1 + 0.1 * np.cos(x[0]))
        g[0, 1] = g[1, 0] = 0.05 * np.sin(x[0] + x[1])
        return g

    return FieldBundle(dim, a, A, g0)


def lattice_fields(a_fn, At=lambda x: 0.0, Ax=lambda x: 0.0, gtt=None, gxx=None):
    """Static two-dimensional description for the field-reduction lattice."""

    def g0(p):
        g = minkowski(2)
        if gtt is not None:
            g[0, 0] = gtt(p[1])
        if gxx is not None:
            g[1, 1] = gxx(p[1])
        return g

    return FieldBundle(dim=2, a=lambda p: a_fn(p[1]), A=lambda p: np.array([At(p[1]), Ax(p[1])]), g0=g0)


@pytest.fixture
def cfg4():
    return ScenarioConfig(base_dim=4)


# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE: dict = {}


def report(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (title, bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} [{number}] {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} [{n}] {title}: {detail}")
