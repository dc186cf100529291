import json
from pathlib import Path

import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def viapoint_cfg():
    from acnmp.config import preset

    return preset("viapoint")


@pytest.fixture(scope="session")
def viapoint_fit(viapoint_cfg):
    """The via-point preset trained on 6 demonstrations (seed 0)."""
    from acnmp.experiments import fit, make_demos

    return fit(viapoint_cfg, make_demos("viapoint2d", viapoint_cfg.train.n_demos, 0))


@pytest.fixture(scope="session")
def frozen():
    return json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())


def report(number: int, passed: bool, detail: str) -> None:
    """Record one acceptance line; they are printed together at the end of the run."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
