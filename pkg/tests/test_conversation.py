import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convrewrite.conversation import (Conversation, DataError, Turn, format_turn_key,
                                      load_manual_rewrites, load_topics, parse_turn_key,
                                      save_topics)
from conftest import FIXTURES
from strategies import datasets


def test_parse_turn_key():
    assert parse_turn_key("31_4") == (31, 4)
    assert parse_turn_key("1_1") == (1, 1)


@pytest.mark.parametrize("bad", ["31-4", "31_", "_4", "a_b", "31_4_1", "0_1", ""])
def test_parse_turn_key_rejects(bad):
    with pytest.raises(DataError, match="turn key"):
        parse_turn_key(bad)


def test_turn_key_error_names_input():
    with pytest.raises(DataError, match="'31-4'"):
        parse_turn_key("31-4")


@given(cid=st.integers(1, 10**6), tno=st.integers(1, 10**4))
def test_turn_key_round_trip(cid, tno):
    assert parse_turn_key(format_turn_key(cid, tno)) == (cid, tno)


def test_turn_validation():
    assert Turn(1, 1, "  hi  ").raw == "hi"
    with pytest.raises(DataError):
        Turn(1, 1, "   ")
    with pytest.raises(DataError, match="first turn"):
        Turn(1, 1, "hi", rewritten="hello")
    Turn(1, 2, "hi", rewritten="hello")


def test_conversation_contiguity():
    with pytest.raises(DataError, match="contiguous"):
        Conversation(1, (Turn(1, 1, "a"), Turn(1, 3, "b")))
    with pytest.raises(DataError, match="duplicate"):
        Conversation(1, (Turn(1, 1, "a"), Turn(1, 1, "b")))
    with pytest.raises(DataError, match="belongs"):
        Conversation(1, (Turn(2, 1, "a"),))


def test_conversation_31_fixture(conv31):
    assert conv31.conv_id == 31
    assert len(conv31) == 9
    first = conv31.turns[0]
    assert first.raw == first.manual == "What is throat cancer?"
    assert conv31.turns[1].manual == "Is throat cancer treatable?"
    assert conv31.has_manual


def test_empty_topic_array(tmp_path):
    p = tmp_path / "t.json"
    p.write_text("[]")
    assert load_topics(p) == []


def test_missing_and_malformed_topic_files(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_topics(tmp_path / "nope.json")
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(DataError, match="invalid JSON"):
        load_topics(p)
    p.write_text(json.dumps([{"number": 1, "turns": [{"number": 1}]}]))
    with pytest.raises(DataError, match="missing field"):
        load_topics(p)
    p.write_text(json.dumps([{"number": 1, "turns": [{"number": 1, "raw_utterance": "a"}]}] * 2))
    with pytest.raises(DataError, match="repeated"):
        load_topics(p)


@settings(max_examples=50, deadline=None)
@given(data=datasets(manual=False))
def test_round_trip_json_and_tsv(tmp_path_factory, data):
    tmp = tmp_path_factory.mktemp("rt")
    for fmt in ("cast-json", "tsv"):
        path = tmp / f"topics.{fmt}"
        save_topics(data, path, fmt)
        assert load_topics(path, fmt) == data


def test_manual_rewrite_sidecar(tmp_path):
    side = tmp_path / "manual.tsv"
    side.write_text("# comment\n31_2\tIs throat cancer treatable?\n")
    assert load_manual_rewrites(side) == {"31_2": "Is throat cancer treatable?"}
    topics = tmp_path / "t.tsv"
    topics.write_text("31_1\tWhat is throat cancer?\n31_2\tIs it treatable?\n")
    convs = load_topics(topics, "tsv", manual_rewrites=side)
    assert convs[0].turns[1].manual == "Is throat cancer treatable?"
    assert convs[0].turns[0].manual is None


def test_sidecar_overrides_inline(tmp_path, conv31):
    side = tmp_path / "m.tsv"
    side.write_text("31_3\tTell me about lung cancer please.\n")
    convs = load_topics(FIXTURES / "cast2019_conv31.json", manual_rewrites=side)
    assert convs[0].turns[2].manual == "Tell me about lung cancer please."
    assert convs[0].turns[3] == conv31.turns[3]


def test_manual_rewrites_empty_and_duplicate(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("")
    assert load_manual_rewrites(p) == {}
    p.write_text("31_2\ta\n31_2\tb\n")
    with pytest.raises(DataError, match="duplicate"):
        load_manual_rewrites(p)
    p.write_text("31_2 no tab\n")
    with pytest.raises(DataError):
        load_manual_rewrites(p)
