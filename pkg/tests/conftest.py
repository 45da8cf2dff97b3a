import numpy as np
import pytest

from dsc.data import SyntheticSpec, generate_synthetic, preprocess


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synthetic():
    """Tiny, well-separated dataset for fast training tests."""
    spec = SyntheticSpec(k_regimes=3, T=48, L=8, W=8, n=2, separation=1.0,
                         noise_sigma=0.05, seed=3)
    cube, truth = generate_synthetic(spec)
    return preprocess(cube), truth


ACCEPTANCE: list[str] = []


def record(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number} {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
