import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poiforge.embed import (EmbeddingStore, cosine_similarity, embed_text, load_embeddings,
                            save_embeddings)
from poiforge.model import InputError


def test_embedding_is_deterministic_and_unit_norm():
    a, b = embed_text("godrej genesis"), embed_text("godrej genesis")
    assert np.array_equal(a, b)
    assert a.shape == (300,)
    assert np.linalg.norm(a) == pytest.approx(1.0)


def test_spell_variant_is_closer_than_unrelated_name():
    near = cosine_similarity(embed_text("happy stay"), embed_text("happi stay"))
    far = cosine_similarity(embed_text("happy stay"), embed_text("blue lagoon"))
    assert near > far
    assert near > 0.5


def test_empty_text_is_zero_vector():
    v = embed_text("")
    assert not v.any()
    assert cosine_similarity(v, embed_text("x y")) == 0.0


def test_cosine_examples():
    v = np.array([0.3, -2.0, 5.0])
    assert cosine_similarity(v, v) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 1], [1, 0]) == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(ValueError):
        cosine_similarity([1, 0], [1, 0, 0])


words = st.lists(st.text(alphabet="abcdefg", min_size=1, max_size=6), min_size=1, max_size=5)


@settings(max_examples=100, deadline=None)
@given(words)
def test_bag_of_trigrams_properties(tokens):
    text = " ".join(tokens)
    v = embed_text(text)
    assert np.allclose(embed_text(" ".join(reversed(tokens))), v)
    assert np.allclose(embed_text(text + " " + text), v)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_cosine_bounded_and_symmetric(a, b):
    c = cosine_similarity(a, b)
    assert -1.0 <= c <= 1.0
    assert c == cosine_similarity(b, a)


def test_store_round_trip(tmp_path):
    store = EmbeddingStore.from_texts({"a": "x y", "b": "godrej genesis", "c": ""}, dim=16)
    p = tmp_path / "e.jsonl"
    save_embeddings(store, p)
    back = load_embeddings(p, 16)
    assert len(back) == 3
    for k in "abc":
        assert np.array_equal(back[k], store[k])


def _write(path, dim, records):
    lines = [json.dumps({"dim": dim})] + [json.dumps({"id": i, "v": v}) for i, v in records]
    path.write_text("\n".join(lines) + "\n")


def test_loader_errors(tmp_path):
    p = tmp_path / "e.jsonl"
    _write(p, 300, [("a1", [0.0] * 299)])
    with pytest.raises(InputError, match="a1"):
        load_embeddings(p, 300)
    _write(p, 2, [("a", [0, 1]), ("a", [1, 0])])
    with pytest.raises(InputError, match="duplicate"):
        load_embeddings(p, 2)
    _write(p, 2, [])
    with pytest.raises(InputError, match="does not match"):
        load_embeddings(p, 3)
    p.write_text('{"dim": 2}\n{"id": "a", "v": [0, 1]}\nnot json\n')
    with pytest.raises(InputError, match=":3"):
        load_embeddings(p, 2)
