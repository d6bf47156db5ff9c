import os
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

# Converted real datasets (Cora/Citeseer/Pubmed) are looked up here; the
# accuracy-band acceptance tests skip when a dataset is absent.
DATA_DIR = Path(os.environ.get("RELGAT_DATA_DIR", Path(__file__).parent.parent / "data"))


@pytest.fixture(scope="session")
def toy3_dir():
    return FIXTURES / "toy3"


@pytest.fixture(scope="session")
def toy24_dir():
    return FIXTURES / "toy24"


@pytest.fixture(scope="session")
def toy24():
    from relgat.data import load_dataset

    return load_dataset(FIXTURES / "toy24")


def real_dataset_dir(name: str):
    """Path to a converted real dataset, or None if unavailable."""
    path = DATA_DIR / name
    if (path / "meta.json").is_file():
        return path
    return None


def require_real_dataset(name: str):
    path = real_dataset_dir(name)
    if path is None:
        pytest.skip(
            f"converted {name} dataset not found under {DATA_DIR} "
            f"(set RELGAT_DATA_DIR or run the ingest tool; raw files are not "
            f"downloadable in this environment)"
        )
    return path
