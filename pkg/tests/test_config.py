import pytest

from vspam.config import SEED_STREAMS, RunConfig
from vspam.errors import InvalidConfig


def test_json_round_trip():
    cfg = RunConfig(image_size=32, levels=4, seed=7, kinds=["vspam"])
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg and again.to_json() == cfg.to_json()


def test_streams_distinct_and_seed_dependent():
    a, b = RunConfig(seed=1), RunConfig(seed=2)
    streams = [a.stream(s) for s in SEED_STREAMS]
    assert len(set(streams)) == len(streams)
    assert all(a.stream(s) != b.stream(s) for s in SEED_STREAMS)
    assert a.stream("train") == RunConfig(seed=1).stream("train")


@pytest.mark.parametrize("bad", [
    {"image_size": 8, "levels": 6},
    {"n_train": 10},
    {"family": "wiggle"},
    {"kinds": ["cubic"]},
    {"target_df": 2},
    {"b_grid": [5000]},
    {"bold_rho": 1.0},
    {"selection": "best"},
    {"seed": -1},
])
def test_validation(bad):
    with pytest.raises(InvalidConfig):
        RunConfig(**bad)


def test_overrides_and_unknown_keys():
    cfg = RunConfig().with_overrides({"n_voxels": "12", "kinds": '["sqrtX"]', "out": "elsewhere"})
    assert cfg.n_voxels == 12 and cfg.kinds == ["sqrtX"] and cfg.out == "elsewhere"
    with pytest.raises(InvalidConfig):
        RunConfig().with_overrides({"nope": 1})
    with pytest.raises(InvalidConfig):
        RunConfig.from_json('{"nope": 1}')
    with pytest.raises(InvalidConfig):
        RunConfig.from_json("[1, 2]")
    with pytest.raises(InvalidConfig):
        RunConfig.from_json("{not json")
