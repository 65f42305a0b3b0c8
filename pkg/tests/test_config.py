from pathlib import Path

import pytest

from artifact.config import DEFAULTS, ConfigError, load_config

ROOT = Path(__file__).resolve().parents[1]


def test_shipped_config_matches_defaults():
    assert load_config(ROOT / "configs" / "default.cfg").digest() == load_config(None).digest()


def test_file_values_are_typed(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("vel.n = 12   # comment\nkernel.conservative = no\npen.alpha = 0.01\n")
    c = load_config(p)
    assert c["vel.n"] == 12 and c["kernel.conservative"] is False
    assert c.alpha_beta == (0.01, 2 * DEFAULTS["pen.gamma"])


@pytest.mark.parametrize("over, msg", [
    ({"weight.theta": "0.3"}, "theta"),
    ({"vel.n": "15"}, "grazing"),
    ({"weight.theta_tilde": "0.05"}, "theta_tilde"),
    ({"pen.gamma0": "0.01"}, "gamma0"),
    ({"nope": "1"}, "unknown"),
    ({"vel.n": "x"}, "integer"),
])
def test_invalid_configs_rejected(over, msg):
    with pytest.raises(ConfigError, match=msg):
        load_config(None, over)


def test_unknown_key_in_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("vel.nn = 8\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_digest_depends_on_values():
    a, b = load_config(None), load_config(None, {"seed": "7"})
    assert a.digest() != b.digest()
    assert a.digest() == load_config(None).digest()


def test_auto_length():
    assert load_config(None).L == pytest.approx(30 / DEFAULTS["pen.gamma0"])
