import pathlib

import pytest

from krev.authenticity import DEFAULT_SCHEME

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def load_vectors(name: str):
    """Parse 'input_hex,output_hex' fixture lines, skipping comments."""
    pairs = []
    for line in (FIXTURES / name).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        left, _, right = line.partition(",")
        pairs.append((bytes.fromhex(left), bytes.fromhex(right)))
    return pairs


@pytest.fixture(scope="session")
def ttp_keys():
    return DEFAULT_SCHEME.generate_keypair(b"test-ttp", 1)


@pytest.fixture(scope="session")
def rsu_keys():
    return DEFAULT_SCHEME.generate_keypair(b"test-rsu", 1007)
