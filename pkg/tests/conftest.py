from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from laborcast.lstnet import LSTNetConfig

REPO = Path(__file__).resolve().parent.parent
FIXTURE_CONFIG = REPO / "configs" / "fixture.ini"


@pytest.fixture
def mini_config() -> LSTNetConfig:
    """T=10, F=3, C=4, k=3, hidden=5, skip={2}, hw=3."""
    return LSTNetConfig(window=10, features=3, conv_channels=4, conv_kernel=3, rnn_hidden=5,
                        skip_lengths=(2,), skip_hidden=2, highway_window=3, horizon=2, target_index=0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def workdir(tmp_path, monkeypatch) -> Path:
    monkeypatch.chdir(tmp_path)
    return tmp_path


PIPELINE = (["fetch"], ["train"], ["evaluate"], ["baselines"], ["forecast"], ["iehi"])


def run_fixture_pipeline(root: Path, *extra: str) -> dict[str, bytes]:
    """Run every subcommand offline against the bundled fixtures inside ``root``.

    Returns each produced file's bytes keyed by its path relative to ``root``.
    """
    from laborcast.cli import main

    root.mkdir(parents=True, exist_ok=True)
    cwd = os.getcwd()
    os.chdir(root)
    try:
        for step in PIPELINE:
            code = main([*step, "--config", str(FIXTURE_CONFIG), "--offline", *extra])
            assert code == 0, f"{step} exited {code}"
    finally:
        os.chdir(cwd)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
