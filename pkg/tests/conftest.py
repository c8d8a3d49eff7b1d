import os

import pytest

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


@pytest.fixture(autouse=True)
def _data_dir(monkeypatch):
    monkeypatch.setenv("SANIA_DATA_DIR", os.path.join(REPO_ROOT, "data"))
