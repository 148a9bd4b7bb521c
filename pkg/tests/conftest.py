import time
from pathlib import Path

import pytest

from core2 import cli

REPO = Path(__file__).resolve().parents[1]
DEFAULT_CONFIG = REPO / "configs" / "default.json"


class PipelineRun:
    """Artifacts of one full default-config pipeline run."""

    def __init__(self, runs_dir: Path, elapsed: float):
        self.config = cli.load_config(DEFAULT_CONFIG)
        self.hash = cli.config_hash(self.config)
        self.runs_dir = Path(runs_dir)
        self.dir = self.runs_dir / self.hash
        self.elapsed = elapsed
        self.pipe = cli.Pipeline(self.config, self.runs_dir)


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory) -> PipelineRun:
    runs = tmp_path_factory.mktemp("runs")
    t0 = time.monotonic()
    rc = cli.main(["pipeline", "--config", str(DEFAULT_CONFIG),
                   "--runs-dir", str(runs)])
    elapsed = time.monotonic() - t0
    assert rc == 0
    return PipelineRun(runs, elapsed)
