import json

import pytest

from ghist.commands import load_run_config
from ghist.config import DEFAULTS, RunConfig
from ghist.errors import DomainError


def test_defaults_are_valid():
    run = RunConfig.from_mapping(DEFAULTS)
    assert run == RunConfig()
    assert run.permutations == 10000
    assert run.gap_method == "boundary-extension"


def test_from_mapping_coerces_strings():
    run = RunConfig.from_mapping({"SEED": "7", "STANDARDIZE": "false", "L0_ABS": "0.5"})
    assert run.seed == 7
    assert run.standardize is False
    assert run.l0_abs == 0.5


@pytest.mark.parametrize("key, value", [
    ("ALPHA", 1.5),
    ("L0_FRACTION", 0.0),
    ("LINKAGE", "single"),
    ("PERMUTATIONS", 0),
    ("GAP_METHOD", "eyeball"),
    ("BASIS", "cox"),
    ("WEIGHTING", "ipcw"),
    ("SEED", "abc"),
])
def test_invalid_values(key, value):
    with pytest.raises(DomainError):
        RunConfig.from_mapping({key: value})


def _opts(**kwargs):
    return kwargs


def test_layering_file_flags_env(tmp_path, monkeypatch):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"SEED": 1, "PERMUTATIONS": 500, "ALPHA": 0.1}))
    monkeypatch.delenv("GH_SEED", raising=False)

    run = load_run_config(str(tmp_path), {}, _opts(config_path=str(path)))
    assert (run.seed, run.permutations, run.alpha) == (1, 500, 0.1)

    run = load_run_config(str(tmp_path), {}, _opts(config_path=str(path), seed=2))
    assert run.seed == 2
    assert run.permutations == 500

    monkeypatch.setenv("GH_SEED", "3")
    run = load_run_config(str(tmp_path), {}, _opts(config_path=str(path), seed=2))
    assert run.seed == 3


def test_l0_fraction_flag_clears_absolute(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"L0_ABS": 0.3}))
    assert load_run_config(str(tmp_path), {}, _opts(config_path=str(path))).l0_abs == 0.3
    run = load_run_config(str(tmp_path), {}, _opts(config_path=str(path), l0_fraction=0.2))
    assert run.l0_abs is None
    assert run.l0_fraction == 0.2


def test_bad_config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("{not json")
    with pytest.raises(DomainError, match="cannot load config file"):
        load_run_config(str(tmp_path), {}, _opts(config_path=str(path)))
