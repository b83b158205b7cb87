import math

import numpy as np
import pytest

from cbfed import ForcingSpec, GridSpec, ModalProfile, PhysicalParams

_ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record one acceptance outcome: ``acceptance(n, passed, detail)``."""

    def record(n: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE.append((n, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {n}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# Shared setting for the contraction / energy / decay checks: on a box of side
# pi (lambda1 = 4) these parameters satisfy mu*lambda1 + 2*alpha > zeta.
CONTRACT_PARAMS = PhysicalParams(mu=1, alpha=1, beta=1, gamma=-0.5, r=5, q=2, box_length=math.pi)
CONTRACT_FORCING = ForcingSpec(
    1.0,
    (
        ModalProfile((1, 0), (0.0, 1.0), (0.5, 0.5)),
        ModalProfile((1, 1), (1.0, -1.0), (0.0, 0.3 - 0.2j)),
    ),
    scale=5.0,
)


def contract_grid(n: int = 32) -> GridSpec:
    return GridSpec(n_per_axis=n, box_length=math.pi)
