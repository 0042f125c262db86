import time
from types import SimpleNamespace

import numpy as np
import pytest

from dcesim.config import ExperimentConfig, validate_config
from dcesim.export import export_figures
from dcesim.lle import LleParams, SolitonField
from dcesim.pipeline import STAGES, Pipeline, modulation_from, write_manifest

ACCEPTANCE_LINES = []

SMALL_CONFIG = """
optics:
  grid_points: 512
  step: 4.0e-3
  steady_tolerance: 1.0e-6
mw:
  time_samples: 64
  basis_cutoff: 32
quantum:
  levels: 4
  pure_samples: 51
  decay_samples: 31
analysis:
  max_fock: 3
  display_levels: 3
"""


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_config():
    return validate_config(SMALL_CONFIG)


def _run_full(config, root):
    pipe = Pipeline(config, root / "cache")
    seconds = {}
    for stage in STAGES:
        start = time.perf_counter()
        pipe.run_stage(stage)
        seconds[stage] = time.perf_counter() - start
    out = root / "out"
    files = export_figures(pipe, "all", out)
    manifest = write_manifest(pipe, files, out)
    return SimpleNamespace(pipe=pipe, out=out, cache=root / "cache", seconds=seconds, manifest=manifest, files=files)


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """The default (paper-parameter) pipeline, run once per session."""
    return _run_full(ExperimentConfig(), tmp_path_factory.mktemp("default_run"))


@pytest.fixture(scope="session")
def small_run(tmp_path_factory, small_config):
    return _run_full(small_config, tmp_path_factory.mktemp("small_run"))


@pytest.fixture(scope="session")
def default_soliton(default_run):
    art = default_run.pipe.cached("soliton")
    return SolitonField(art.arrays["envelope"], LleParams(), art.metadata["residual"], True)


@pytest.fixture(scope="session")
def default_modulation(default_run):
    return modulation_from(default_run.pipe.cached("modulation"))


@pytest.fixture(scope="session")
def default_basis(default_modulation):
    from dcesim.mw_spectrum import build_mode_basis

    return build_mode_basis(default_modulation, (1, 2, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
