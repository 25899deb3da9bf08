import numpy as np
import pytest

from pff.material import MaterialParams, Split


@pytest.fixture
def sent_params():
    return MaterialParams(lame_lambda=121154.0, shear_mu=80769.0, Gc=2.7, length_l=0.02)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def fd_jacobian(fun, x, h=1e-7):
    """Central-difference Jacobian of a vector function."""
    f0 = np.asarray(fun(x))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        step = np.zeros_like(x)
        step[j] = h * max(1.0, abs(x[j]))
        J[:, j] = (np.asarray(fun(x + step)) - np.asarray(fun(x - step))) / (2 * step[j])
    return J


def material(split=Split.NOSPLIT, **kw):
    base = dict(lame_lambda=121154.0, shear_mu=80769.0, Gc=2.7, length_l=0.02, split=split)
    base.update(kw)
    return MaterialParams(**base)


# acceptance verdicts, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
