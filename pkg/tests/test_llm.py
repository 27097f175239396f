import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from opsdiag.errors import NoScriptMatch, ScriptParseError
from opsdiag.llm import (
    ChatMessage,
    ChatRequest,
    ScriptBook,
    ScriptEntry,
    ScriptedProvider,
    canonical_text,
    count_tokens,
)


class TestCountTokens:
    def test_four_bytes_is_one_token(self):
        assert count_tokens("abcd") == 1

    def test_hello_world(self):
        assert count_tokens("hello world") == 3

    def test_empty(self):
        assert count_tokens("") == 0

    def test_multibyte_counts_utf8_bytes(self):
        # four 3-byte characters -> 12 bytes -> 3 tokens
        assert count_tokens("一" * 4) == 3

    @given(st.text(max_size=500))
    def test_matches_formula(self, text):
        expected = math.ceil(len(text.encode("utf-8")) / 4) if text else 0
        assert count_tokens(text) == expected


class TestCanonicalText:
    def test_string_passthrough(self):
        assert canonical_text("plain") == "plain"

    def test_dict_keys_sorted(self):
        assert canonical_text({"b": 1, "a": 2}) == canonical_text({"a": 2, "b": 1})
        assert canonical_text({"b": 1, "a": 2}) == '{"a":2,"b":1}'


class TestScriptBook:
    def test_first_match_wins(self):
        book = ScriptBook([ScriptEntry("alpha", "one"), ScriptEntry("alp", "two")])
        assert book.lookup("say alpha now") == "one"

    def test_max_uses_exhaustion_falls_through(self):
        book = ScriptBook([
            ScriptEntry("go", "first", max_uses=1),
            ScriptEntry("go", "rest"),
        ])
        assert book.lookup("go") == "first"
        assert book.lookup("go") == "rest"
        assert book.lookup("go") == "rest"

    def test_no_match_carries_last_message(self):
        book = ScriptBook([ScriptEntry("alpha", "one")])
        with pytest.raises(NoScriptMatch) as exc:
            book.lookup("nothing here")
        assert exc.value.last_user_message == "nothing here"

    def test_empty_matcher_rejected(self):
        with pytest.raises(ScriptParseError):
            ScriptBook([ScriptEntry("", "x")])

    def test_from_obj_validates_entries(self):
        with pytest.raises(ScriptParseError):
            ScriptBook.from_obj([{"matcher": "a"}])
        with pytest.raises(ScriptParseError):
            ScriptBook.from_obj({"matcher": "a", "response": "b"})
        with pytest.raises(ScriptParseError):
            ScriptBook.from_obj([{"matcher": "a", "response": "b", "max_uses": 0}])

    def test_from_obj_serializes_structured_responses(self):
        book = ScriptBook.from_obj([{"matcher": "a", "response": {"k": 1}}])
        assert book.lookup("a") == '{"k": 1}'


class TestScriptedProvider:
    def test_matches_last_user_message(self):
        book = ScriptBook([ScriptEntry("second", "ok")])
        provider = ScriptedProvider(book)
        request = ChatRequest(messages=[
            ChatMessage(role="user", content="first"),
            ChatMessage(role="assistant", content="second mention ignored"),
            ChatMessage(role="user", content="the second one"),
        ])
        response = provider.complete(request)
        assert response.text == "ok"
        assert response.finish_reason == "stop"
        assert response.completion_tokens == count_tokens("ok")

    def test_usage_accounting(self):
        book = ScriptBook([ScriptEntry("q", "answer")])
        provider = ScriptedProvider(book)
        request = ChatRequest(messages=[ChatMessage(role="user", content="q" * 8)])
        response = provider.complete(request)
        assert response.prompt_tokens == count_tokens("q" * 8)
