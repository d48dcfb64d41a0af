import os
import sys
from pathlib import Path

import numpy as np
import pytest

from minielsa.dataset import Dataset, load_ccpp, synth_ccpp
from minielsa.pipeline import PipelineConfig

# Real-data file for the acceptance bands; falls back to the synthetic
# generator (with the relaxed bands) when absent.
_CCPP_CANDIDATES = [
    os.environ.get("CCPP_CSV", ""),
    str(Path(__file__).resolve().parent.parent / "data" / "ccpp.csv"),
]

ACCEPTANCE_PROFILE = os.environ.get("MINIELSA_TEST_PROFILE", "full")


def find_ccpp_file() -> str | None:
    for path in _CCPP_CANDIDATES:
        if path and Path(path).is_file():
            return path
    return None


@pytest.fixture(scope="session")
def acceptance_dataset() -> Dataset:
    path = find_ccpp_file()
    if path:
        return load_ccpp(path)
    return synth_ccpp(9568, seed=1)


@pytest.fixture(scope="session")
def acceptance_config() -> PipelineConfig:
    return PipelineConfig(gbrt_profile=ACCEPTANCE_PROFILE)


@pytest.fixture(scope="module")
def small_dataset() -> Dataset:
    return synth_ccpp(1200, seed=7)


def small_config(**overrides) -> PipelineConfig:
    """Config scaled down for fast unit tests."""
    base = dict(
        shap_ref_size=50,
        gbrt_profile="fast",
        gbrt_trees=80,
        gbrt_lr=0.3,
        repetitions=5,
        warmup=1,
    )
    base.update(overrides)
    return PipelineConfig(**base)


def criterion_line(number: int, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    # sys.__stdout__ bypasses pytest capture: one visible line per criterion
    # regardless of -s.
    print(f"[{status}] acceptance criterion {number}: {detail}", file=sys.__stdout__)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
