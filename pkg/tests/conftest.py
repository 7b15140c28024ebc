import shutil
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(Path(__file__).parent))

REFERENCE_CFG = ROOT / "configs" / "small.cfg"

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def _variant(text: str, **overrides) -> str:
    lines = []
    for line in text.splitlines():
        key = line.split("=", 1)[0].strip()
        if key in overrides:
            line = f"{key} = {overrides.pop(key)}"
        lines.append(line)
    lines += [f"{k} = {v}" for k, v in overrides.items()]
    return "\n".join(lines) + "\n"


def run_cli_evolve(tmp: Path, name: str, **overrides) -> Path:
    from ymsw.cli import main
    cfg = tmp / f"{name}.cfg"
    cfg.write_text(_variant(REFERENCE_CFG.read_text(), **overrides))
    out = tmp / name
    if out.exists():
        shutil.rmtree(out)
    code = main(["evolve", str(cfg), "--out", str(out)])
    assert code == 0, f"evolve {name} exited {code}"
    return out


@pytest.fixture(scope="session")
def runs_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("runs")


@pytest.fixture(scope="session")
def reference_run(runs_dir):
    """The shipped reference configuration, unchanged."""
    return run_cli_evolve(runs_dir, "reference")


@pytest.fixture(scope="session")
def refined_run(runs_dir):
    """Reference with dx halved; the stride is kept, so the observer cadence halves too."""
    return run_cli_evolve(runs_dir, "refined", **{"grid.n": 16001, "observers.pointwise": "false"})


@pytest.fixture(scope="session")
def long_run(runs_dir):
    """t_end doubled on a domain doubled so the causal buffer still covers the window."""
    return run_cli_evolve(runs_dir, "long", **{"grid.x_min": -400, "grid.x_max": 400, "grid.n": 16001,
                                                "evolution.t_end": 200, "observers.identity": "false",
                                                "observers.null_lines": "", "observers.snapshots": ""})


@pytest.fixture(scope="session")
def coarse_run(runs_dir):
    """Reference with dx doubled, third member of the Richardson triple."""
    return run_cli_evolve(runs_dir, "coarse", **{"grid.n": 4001, "observers.identity": "false",
                                                  "observers.pointwise": "false", "observers.null_lines": "",
                                                  "observers.snapshots": ""})


@pytest.fixture(scope="session")
def sweep_runs(runs_dir):
    out = {}
    for amp in (0.005, 0.02):
        out[amp] = run_cli_evolve(runs_dir, f"amp{amp}", **{"initial.amplitude": amp,
                                                            "observers.identity": "false",
                                                            "observers.pointwise": "false",
                                                            "observers.null_lines": "",
                                                            "observers.snapshots": ""})
    return out
