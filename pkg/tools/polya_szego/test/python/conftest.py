"""Common fixtures for the symmetrization toolkit tests."""

import json

import pytest
from polya_szego.function_model import (
    AffineExponent,
    ConstantExponent,
    PowerWellExponent,
    QuadraticExponent,
)


@pytest.fixture(scope="function")
def power_well():
    """The exponent with (p - 1)^0.37 exactly affine in x^2."""
    return PowerWellExponent(a=0.5, b=1.0, gamma=1.0 / 0.37)


@pytest.fixture(scope="function")
def affine():
    return AffineExponent(a=2.0, b=0.5)


@pytest.fixture(scope="function")
def quadratic():
    return QuadraticExponent(a=2.0, b=1.0)


@pytest.fixture(scope="function")
def constant():
    return ConstantExponent(p0=2.0)


@pytest.fixture(scope="function")
def write_json(tmp_path):
    """Write a document to a JSON file under tmp_path and return its path."""

    def _write(name, document):
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return str(path)

    return _write
