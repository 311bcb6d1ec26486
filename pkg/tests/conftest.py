from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg as sla

from spectral_dist.laplacian import laplacian_pair
from spectral_dist.shapes import golden_meshes

DATA = Path(__file__).parent / "data"


@lru_cache(maxsize=None)
def golden(name):
    return golden_meshes()[name]


@lru_cache(maxsize=None)
def pair_of(name, scheme="barycentric-lumped"):
    return laplacian_pair(golden(name), scheme)


@lru_cache(maxsize=None)
def dense_eigs(name, scheme="barycentric-lumped"):
    """Independent oracle: full generalized eigendecomposition of the dense pencil."""
    pr = pair_of(name, scheme)
    w, X = sla.eigh(pr.stiffness.toarray(), pr.mass.toarray())
    w[0] = 0.0
    return w, X


def dense_kernel(name, weights, scheme="barycentric-lumped"):
    """``X diag(weights(lambda)) X' B`` from the dense oracle."""
    w, X = dense_eigs(name, scheme)
    B = pair_of(name, scheme).mass.toarray()
    return (X * weights(w)) @ X.T @ B


GOLDEN_NAMES = ("triangle", "icosahedron", "sphere500", "sphere2000", "blob1500")
SMALL_NAMES = ("triangle", "icosahedron", "sphere500")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
