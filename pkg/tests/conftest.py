import numpy as np
import pytest

from otmap.ot_core import set_check_mode


@pytest.fixture(autouse=True, scope="session")
def _invariant_checks():
    # every solve in the test session verifies marginals, duals and the gap
    set_check_mode(True)
    yield
    set_check_mode(False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("OTMAP_CACHE_DIR", str(tmp_path / "cache"))
