from pathlib import Path

import numpy as np
import pytest

from axdse.mult import make_exact, make_product_truncated, make_truncated
from axdse.qnet import load_cifar10, load_network

DATA = Path(__file__).parent / "data"
# Optional EvoApprox-derived LUTs (mul8u_7C1.lut, mul8u_L40.lut); not shipped.
EVOAPPROX_DIR = DATA / "evoapprox"


@pytest.fixture(scope="session")
def fixture_net():
    return load_network(DATA / "fixture_net")


@pytest.fixture(scope="session")
def float_net():
    return load_network(DATA / "fixture_float")


@pytest.fixture(scope="session")
def test_records():
    return load_cifar10(DATA / "synthetic_test.bin")


@pytest.fixture(scope="session")
def desk_library():
    """Exact plus three approximate variants with synthetic energies."""
    return [
        make_exact(8, energy_pj=1.0, name="exact"),
        make_truncated(8, 3, energy_pj=0.70, name="trunc_op3"),
        make_truncated(8, 5, energy_pj=0.45, name="trunc_op5"),
        make_product_truncated(8, 8, energy_pj=0.80, name="trunc_prod8"),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_net():
    """Three plain conv layers, small enough to enumerate every two-tile genome."""
    return load_network(DATA / "toy_net")


def noisy_lut(seed, bits=8):
    """Exact products plus sparse signed noise, clipped at zero."""
    rng = np.random.default_rng(seed)
    n = 1 << bits
    exact = np.multiply.outer(np.arange(n), np.arange(n))
    noise = rng.integers(-300, 301, size=(n, n)) * (rng.random((n, n)) < 0.3)
    return np.clip(exact + noise, 0, None)


@pytest.fixture(scope="session")
def library36(tmp_path_factory):
    """36 eight-bit multipliers: 23 built-in truncations plus 13 noisy LUTs read back from disk."""
    from axdse.mult import MultiplierModel, load_lut, store_lut

    lib = [make_exact(8, 1.0, "exact")]
    lib += [make_truncated(8, k, energy_pj=1.0 - 0.1 * k, name=f"trunc_op{k}") for k in range(1, 8)]
    lib += [make_product_truncated(8, k, energy_pj=1.0 - 0.04 * k, name=f"trunc_prod{k}") for k in range(1, 16)]
    d = tmp_path_factory.mktemp("luts")
    for i in range(13):
        store_lut(MultiplierModel(f"noisy{i}", 8, noisy_lut(i), 0.5 + 0.03 * i), d / f"noisy{i}.lut")
        lib.append(load_lut(d / f"noisy{i}.lut"))
    return lib
