import shutil
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pytest

from rispilot import kernels
from rispilot.cli import cell_dir, main
from rispilot.config import ExperimentConfig, dump_config
from rispilot.pipeline import SweepReport


@pytest.fixture
def rng(request):
    # reproducible stream that differs between tests
    key = [ord(c) for c in request.node.nodeid[-32:]]
    return np.random.default_rng([7, *key])


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    with kernels.use_backend(request.param):
        yield request.param


# -- desk-scale runs shared by the pipeline and acceptance tests -----------------

DESK_SEED = 20240607


@dataclass
class DeskRun:
    out: Path
    config: ExperimentConfig
    report: SweepReport
    seconds: float


def desk_config(out: Path, grid: bool) -> ExperimentConfig:
    cfg = ExperimentConfig().with_seed(DESK_SEED)
    sweep = cfg.sweep if grid else replace(cfg.sweep, lambdas=(cfg.split.lam,), taps=(cfg.channel.n_taps,))
    return replace(cfg, sweep=sweep, out=str(out))


def run_desk(out: Path, grid: bool = False, resume: bool = False) -> DeskRun:
    """``rispilot train`` then ``rispilot sweep`` at desk scale through the CLI."""
    out.mkdir(parents=True, exist_ok=True)
    cfg = desk_config(out, grid)
    cfg_path = out / "experiment.cfg"
    cfg_path.write_text(dump_config(cfg))
    t0 = time.perf_counter()
    train_args = ["train", "--config", str(cfg_path)] + (["--resume"] if resume else [])
    assert main(train_args) == 0
    assert main(["sweep", "--config", str(cfg_path)]) == 0
    seconds = time.perf_counter() - t0
    return DeskRun(out, cfg, SweepReport.from_csv((out / "results.csv").read_text()), seconds)


@pytest.fixture(scope="session")
def desk_base(tmp_path_factory):
    """The base cell (lambda=0.15, L=5) trained and swept once per session."""
    return run_desk(tmp_path_factory.mktemp("desk_base"))


@pytest.fixture(scope="session")
def desk_grid(tmp_path_factory, desk_base):
    """Full 3x3 (lambda, L) grid; the base cell's checkpoints are reused."""
    out = tmp_path_factory.mktemp("desk_grid")
    cfg = desk_base.config
    src = cell_dir(desk_base.out, cfg.split.lam, cfg.channel.n_taps)
    shutil.copytree(src, cell_dir(out, cfg.split.lam, cfg.channel.n_taps))
    run = run_desk(out, grid=True, resume=True)
    # the reused cell's training time counts towards the grid budget
    train_base = desk_base.seconds
    return replace(run, seconds=run.seconds + train_base)


# -- acceptance report -----------------------------------------------------------

ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
