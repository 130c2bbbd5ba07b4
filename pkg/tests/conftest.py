import os
from collections.abc import Callable

import numpy as np
import pytest

from probeseg.microworld import SceneSpec
from probeseg.predictor import ModelConfig, Predictor, build_model

from .world_utils import box_scene


@pytest.fixture(autouse=True)
def _isolated_config(monkeypatch, tmp_path_factory):
    """Keep a developer's own probeseg config and env vars out of the tests."""
    monkeypatch.setattr(
        "probeseg.config.user_config_dir",
        lambda _name: str(tmp_path_factory.mktemp("user-config")),
    )
    for name in list(os.environ):
        if name.startswith("PROBESEG_"):
            monkeypatch.delenv(name, raising=False)


@pytest.fixture
def make_box_scene() -> Callable[..., SceneSpec]:
    return box_scene


@pytest.fixture
def tiny_model() -> Predictor:
    return build_model(ModelConfig.tiny(), seed=0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
