import numpy as np
import pytest

from causalprompt.cli.Pipeline import bundled_dataset
from causalprompt.data.Dataset import load_dataset
from causalprompt.utils.Config import PipelineConfig


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def toy_records():
    return load_dataset(bundled_dataset())


@pytest.fixture
def mock_config(tmp_path):
    """Offline configuration writing into a per-test directory."""
    return PipelineConfig.model_validate({
        "output_dir": str(tmp_path / "run"),
        "seed": 7,
        "llm": {"mock": True},
        "metrics": {"workers": 4},
        "ga": {"population": 12, "generations": 10, "survivors": 4},
    })
