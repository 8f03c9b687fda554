import json

import pytest

from zonotope_clt.config import TOLERANCES, ConfigError, load, model_cone, resolve


def test_defaults_filled():
    cfg = resolve({}, "clt")
    assert cfg["experiment"]["M"] == 2000
    assert cfg["experiment"]["tolerances"] == TOLERANCES
    assert cfg["model"]["cone"]["rays"] == [[1, 0], [0, 1]]


def test_override_and_subcone():
    cfg = resolve({"model": {"n": 50, "subcone": [{"u": [1, -1], "sense": ">=0"}]},
                   "experiment": {"tolerances": {"alpha": 0.05}}}, "clt")
    assert cfg["model"]["n"] == 50
    assert cfg["experiment"]["tolerances"]["alpha"] == 0.05
    cone, sub = model_cone(cfg)
    assert sub.contains([2, 1]) and not sub.contains([1, 2])


@pytest.mark.parametrize("raw", [
    {"model": {"n": -3}},
    {"bogus": 1},
    {"experiment": {"name": "nope"}},
    {"experiment": {"tolerances": {"unknown_tol": 1}}},
    {"model": {"k": [1, 1, 1]}},
    {"experiment": {"directions": [[0, 0]]}},
    {"experiment": {"name": "llt"}},
])
def test_invalid(raw):
    with pytest.raises(ConfigError):
        resolve(raw, "clt")


def test_load(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"experiment": {"M": 700}}))
    assert load(tmp_path / "c.json", "clt")["experiment"]["M"] == 700
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        load(tmp_path / "bad.json", "clt")
