import pytest

from convrewrite.config import ConfigError, PipelineConfig, parse_config_text, resolve_config


def test_defaults_validate():
    cfg = PipelineConfig().validate()
    assert cfg.template == "P5" and cfg.seed == 13 and cfg.k_first == 1000
    assert cfg.cutoffs("ndcg_cutoffs") == (3,)


def test_file_then_overrides(tmp_path):
    p = tmp_path / "c.conf"
    p.write_text("# comment\ntemplate = P3\nk-first = 50\nrerank = no\ntopics = t.json\n")
    cfg = resolve_config(p, {"template": "P1", "seed": "7", "k_first": None})
    assert (cfg.template, cfg.seed, cfg.k_first, cfg.rerank) == ("P1", 7, 50, False)
    assert cfg.topics == str(tmp_path / "t.json")


@pytest.mark.parametrize("text,msg", [
    ("nonsense", "key = value"), ("colour = red", "unknown setting"),
    ("seed = x", "cannot parse"), ("rerank = maybe", "cannot parse")])
def test_parse_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config_text(text)


@pytest.mark.parametrize("override,msg", [
    ({"template": "P7"}, "template"), ({"k_first": "0"}, "k_first"), ({"alpha": "1.5"}, "alpha"),
    ({"ndcg_cutoffs": "3 x"}, "ndcg_cutoffs"), ({"reranker": "external"}, "reranker_command"),
    ({"m": "-1"}, "m must")])
def test_validation(override, msg):
    with pytest.raises(ConfigError, match=msg):
        resolve_config(None, override)


def test_hash_ignores_non_semantic_fields():
    base = PipelineConfig()
    assert PipelineConfig(out_dir="elsewhere", workers=9, cache_dir="c").hash == base.hash
    assert PipelineConfig(seed=14).hash != base.hash
    text = base.to_text()
    assert text.startswith(f"# config hash {base.hash}\n")
    assert "rerank = true" in text


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        resolve_config(tmp_path / "nope.conf")
