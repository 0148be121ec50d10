import pytest

from maps.config import ConfigError, RunConfig, load_config, parse_config, parse_regimes


def test_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.agents == 4 and cfg.window == 30 and cfg.train.lam == 0.8
    assert str(cfg.checkpoint_dir).endswith("checkpoint")


def test_values_parsed():
    cfg = parse_config(
        "seed = 7\nagents = 2\nbase_sizes = 8, 4\nmaxiter = 50\nlam = 0.5\ntd_form = printed\n"
        "synth_regimes = 0.001:0.02:100; 0:0.01:50\nbaselines = mr\ndiscrete_baselines = yes\n"
        "train_range = 2000-01-01:2000-06-30\nvalid_range = 2000-07-01:2000-09-30\n"
        "test_range = 2000-10-01:2000-12-31\n"
    )
    assert (cfg.seed, cfg.agents, cfg.base_sizes, cfg.train.maxiter, cfg.train.lam) == (7, 2, (8, 4), 50, 0.5)
    assert cfg.train.td_form == "printed" and cfg.baselines == ("MR",) and cfg.discrete_baselines
    assert cfg.synth_regimes == ((0.001, 0.02, 100), (0.0, 0.01, 50))
    assert cfg.split.test_range == ("2000-10-01", "2000-12-31")


def test_section_header_optional():
    assert parse_config("[maps]\nagents = 3\n").agents == 3


@pytest.mark.parametrize(
    "text",
    [
        "agnets = 3\n",
        "agents = 0\n",
        "agents = many\n",
        "lam = 2\n",
        "baselines = MOM, RSI\n",
        "train_range = 2000-01-01:2000-02-01\n",
        "train_range = 2000-01-01\nvalid_range = a:b\ntest_range = c:d\n",
        "config_version = 2\n",
        "[other]\nagents = 3\n",
        "discrete_baselines = maybe\n",
    ],
)
def test_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_overrides():
    cfg = parse_config("seed = 1\n").with_overrides(seed=9, out="x")
    assert cfg.seed == 9 and cfg.out == "x" and cfg.train.seed == 9


def test_regimes_empty():
    with pytest.raises(ConfigError):
        parse_regimes(" ; ")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")
