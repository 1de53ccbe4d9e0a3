import json
import logging

import numpy as np

from lesionbench.utils.config import Configuration, EnvMode
from lesionbench.utils.logger import JSONFormatter, bind_run_id
from lesionbench.utils.seeding import derive_seed, seed_everything
from lesionbench.utils.sentry import init_sentry


def test_configuration_coerces_environment_values(monkeypatch):
    monkeypatch.setenv("ENV_MODE", "production")
    monkeypatch.setenv("NUM_WORKERS", "3")
    monkeypatch.setenv("DETERMINISTIC", "no")
    monkeypatch.setenv("SENTRY_TRACES_SAMPLE_RATE", "0.25")
    monkeypatch.setenv("LOG_DIR", "/tmp/lesionbench-logs")
    config = Configuration()
    assert config.ENV_MODE == EnvMode.PRODUCTION
    assert config.NUM_WORKERS == 3
    assert config.DETERMINISTIC is False
    assert config.SENTRY_TRACES_SAMPLE_RATE == 0.25
    assert config.LOG_DIR == "/tmp/lesionbench-logs"


def test_configuration_falls_back_on_invalid_values(monkeypatch):
    monkeypatch.setenv("ENV_MODE", "moon")
    monkeypatch.setenv("NUM_WORKERS", "many")
    monkeypatch.setenv("LOG_LEVEL", "LOUD")
    config = Configuration()
    assert config.ENV_MODE == EnvMode.LOCAL
    assert config.NUM_WORKERS == 0
    assert config.LOG_LEVEL == "INFO"
    assert config.get("MISSING", 5) == 5
    assert "DEVICE" in config.as_dict()


def test_json_formatter_carries_the_run_id():
    record = logging.LogRecord("lesionbench", logging.INFO, __file__, 10, "epoch %d done", (3,), None)
    with bind_run_id("v_net-7"):
        payload = json.loads(JSONFormatter().format(record))
    assert payload["message"] == "epoch 3 done"
    assert payload["run_id"] == "v_net-7"
    assert payload["level"] == "INFO"
    assert json.loads(JSONFormatter().format(record))["run_id"] == ""


def test_derive_seed_is_stable_and_key_sensitive():
    assert derive_seed(0, "case1", 3) == derive_seed(0, "case1", 3)
    assert derive_seed(0, "case1", 3) != derive_seed(0, "case1", 4)
    assert derive_seed(0, "case1") != derive_seed(1, "case1")
    assert 0 <= derive_seed(2**40, "x") < 2**63


def test_seed_everything_makes_numpy_reproducible():
    seed_everything(11, deterministic=False)
    first = np.random.rand(3)
    seed_everything(11, deterministic=False)
    np.testing.assert_array_equal(first, np.random.rand(3))


def test_sentry_stays_off_without_dsn(monkeypatch):
    from lesionbench.utils import sentry

    monkeypatch.setattr(sentry.config, "SENTRY_DSN", None)
    monkeypatch.setattr(sentry, "_initialized", False)
    assert init_sentry() is False
