import json

import pytest

from flowopt.config import DEFAULTS, config_hash, from_dict, load_config
from flowopt.errors import ConfigError


def test_defaults_validate():
    cfg = from_dict({})
    assert cfg["budget"] == 50 and cfg["max_depth"] == 50
    assert cfg["optimizer"]["candidates"] == 5000
    assert cfg["prior"]["delta"] == 0.4
    assert len(cfg.feature_ids) == 6


@pytest.mark.parametrize("raw, field", [
    ({"budget": 0}, "budget"),
    ({"holdout": 1.0}, "holdout"),
    ({"prior": {"delta": 2}}, "prior.delta"),
    ({"prior": {"gamma": 1}}, "prior.gamma"),
    ({"cost_metric": {"repetitions": 4}}, "cost_metric.repetitions"),
    ({"features": ["dur", "nope"]}, "features[1]"),
    ({"methods": ["bo", "magic"]}, "methods[1]"),
    ({"optimizer": {"init_samples": 60}}, "optimizer.init_samples"),
    ({"data": {"source": "csv"}}, "data.path"),
    ({"seeds": [1, 1]}, "seeds"),
    ({"bogus": 1}, "bogus"),
])
def test_field_diagnostics(raw, field):
    with pytest.raises(ConfigError, match=field.replace("[", r"\[").replace("]", r"\]")):
        from_dict(raw)


def test_hash_ignores_bookkeeping():
    a = from_dict({"seeds": [0], "output_dir": "x"})
    b = from_dict({"seeds": [5, 6], "output_dir": "y", "experiment": "other"})
    assert a.hash() == b.hash()
    assert a.hash() != from_dict({"budget": 51}).hash()
    assert config_hash(DEFAULTS) == from_dict({}).hash()


def test_load_config_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"budget": 10,\n "max_depth": }')
    with pytest.raises(ConfigError, match=r"c.json:2:"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    p.write_text(json.dumps({"budget": 5}))
    assert load_config(p)["budget"] == 5


def test_with_changes():
    cfg = from_dict({}).with_changes(prior={"delta": 0.1})
    assert cfg["prior"]["delta"] == 0.1 and cfg["prior"]["depth_beta"] == 2.0
