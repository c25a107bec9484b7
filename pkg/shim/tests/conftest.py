import pytest
from fastapi.testclient import TestClient

from cola_shim.registry import ModelRegistry
from cola_shim.server import create_app
from cola_shim.tinymodels import build_tiny_causal_lm, build_tiny_masked_lm


@pytest.fixture(scope="session")
def model_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny-models")
    return {
        "masked": build_tiny_masked_lm(root / "mlm"),
        "causal": build_tiny_causal_lm(root / "clm"),
    }


@pytest.fixture(scope="session")
def registry(model_dirs):
    registry = ModelRegistry()
    registry.register("mlm", model_dirs["masked"], "masked")
    clm = model_dirs["causal"]
    registry.register("generator", clm, "causal")
    registry.register("infill", clm, "causal")
    registry.register("clm", clm, "causal")
    return registry


@pytest.fixture(scope="session")
def client(registry):
    app = create_app(registry)
    with TestClient(app, raise_server_exceptions=False) as client:
        yield client
