import pytest

from cola.config import EngineConfig, apply_overrides, load_config
from cola.errors import DataError


CONFIG_TOML = """
seed = 7
cache_dir = "/tmp/somewhere"
parallelism = 2

[backend]
mode = "record"
base_url = "http://localhost:9999"
mask_model = "bert-large"

[sampler]
per_timestamp_samples = 10
n = 8
multistamp = false

[interventions]
codes = ["negation", "lexical"]
cap = 12

[match]
epsilon = 0.014
normalizations = ["S", "E"]
"""


class TestLoadConfig:
    def test_defaults(self):
        config = load_config(None)
        assert config.backend.mode == "replay"
        assert config.sampler.per_timestamp_samples == 50
        assert config.interventions.cap == 50
        assert config.match.epsilon == 0.006

    def test_full_file(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text(CONFIG_TOML)
        config = load_config(path)
        assert config.seed == 7
        assert config.backend.mode == "record"
        assert config.backend.mask_model == "bert-large"
        assert config.sampler.n == 8
        assert not config.sampler.multistamp
        assert config.interventions.codes == ("negation", "lexical")
        assert config.match.epsilon == 0.014
        assert config.match.normalizations == frozenset({"S", "E"})
        # top-level seed propagates into sampler/intervention seeds
        assert config.sampler.seed == 7
        assert config.interventions.seed == 7

    def test_env_overrides_cache_dir(self, tmp_path, monkeypatch):
        path = tmp_path / "c.toml"
        path.write_text(CONFIG_TOML)
        monkeypatch.setenv("COLA_CACHE_DIR", "/env/cache")
        assert load_config(path).cache_dir == "/env/cache"

    def test_flags_override_everything(self, tmp_path, monkeypatch):
        path = tmp_path / "c.toml"
        path.write_text(CONFIG_TOML)
        monkeypatch.setenv("COLA_CACHE_DIR", "/env/cache")
        config = apply_overrides(
            load_config(path), mode="replay", cache_dir="/flag/cache", epsilon=0.001
        )
        assert config.backend.mode == "replay"
        assert config.cache_dir == "/flag/cache"
        assert config.match.epsilon == 0.001

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_config(tmp_path / "nope.toml")

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("not [ valid")
        with pytest.raises(DataError):
            load_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text("[backend]\nflux_capacitor = 1\n")
        with pytest.raises(DataError):
            load_config(path)

    def test_snapshot_round_trips_shape(self):
        snapshot = EngineConfig().to_dict()
        assert snapshot["backend"]["mode"] == "replay"
        assert snapshot["match"]["epsilon"] == 0.006
        assert snapshot["interventions"]["codes"][0] == "resemantic"
