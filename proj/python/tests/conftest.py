import json
import os
import pathlib

import pytest

ROOT = pathlib.Path(os.environ.get("SHAREDCTL_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))


@pytest.fixture(scope="session")
def root():
    return ROOT


@pytest.fixture(scope="session")
def config_path():
    return ROOT / "configs" / "paper_s4.json"


@pytest.fixture(scope="session")
def schemas():
    out = {}
    for p in (ROOT / "docs" / "schema").glob("*.schema.json"):
        out[p.name] = json.loads(p.read_text())
    return out


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("SHAREDCTL_CLI")
    if not path or not pathlib.Path(path).exists():
        pytest.skip("sharedctl executable not available")
    return path
