import time
from dataclasses import dataclass

import pytest

from density_filter.harness.config import ScenarioConfig
from density_filter.harness.experiment import ExperimentResult, run_experiment
from density_filter.harness.truth import GroundTruth, solve_ground_truth

BENCHMARK_BANDWIDTHS = (0.03, 0.05, 0.08)


@dataclass
class Benchmark:
    result: ExperimentResult
    seconds: float


@pytest.fixture(scope="session")
def truth30() -> GroundTruth:
    """Reference density for the default scenario over t in [0, 30]."""
    return solve_ground_truth(ScenarioConfig())


@pytest.fixture(scope="session")
def benchmark() -> Benchmark:
    """Default scenario, three bandwidths x five seeds, no files written.

    The timing covers the whole experiment including its own ground-truth solve.
    """
    cfg = ScenarioConfig(bandwidths=list(BENCHMARK_BANDWIDTHS), snapshot_every=0)
    start = time.perf_counter()
    result = run_experiment(cfg, write=False)
    return Benchmark(result, time.perf_counter() - start)


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
