import numpy as np
import pytest

from unvd import embedding
from unvd.fixtures import build_two_collection_fixture


@pytest.fixture(scope="session")
def two_collection_fixture(tmp_path_factory):
    root = tmp_path_factory.mktemp("fixture")
    return build_two_collection_fixture(root, seed=0)


@pytest.fixture(scope="session")
def fixture_embeddings(two_collection_fixture):
    """(labels, ids, matrix) for the 50 fixture images."""
    media = two_collection_fixture / "media"
    labels, ids, rows = [], [], []
    for prefix, contract in (("warm", "0x" + "a" * 40), ("cool", "0x" + "b" * 40)):
        for i in range(25):
            png = (media / f"{prefix}{i}.png").read_bytes()
            rows.append(embedding.embed_bytes(png))
            labels.append(prefix)
            ids.append(f"ethereum:{contract}:{i}")
    return labels, ids, np.stack(rows).astype(np.float64)
