import json

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from steer.data import SEPARATOR, DatasetRecord, escape_separator
from steer.decoding import nucleus_filter, softmax, top_k_filter
from steer.guidance import cfg_guidance, contrastive_expert_guidance, negative_prompt_mix
from steer.metrics import normalized_ngrams, rank_auroc
from steer.rng import Xoshiro256

finite = st.floats(-50, 50, allow_nan=False)
vec = st.integers(2, 12).flatmap(lambda n: st.tuples(arrays(np.float64, n, elements=finite),
                                                     arrays(np.float64, n, elements=finite)))
unit = st.floats(0, 1)


@given(vec, st.floats(-100, 100))
def test_softmax_shift(pair, c):
    x, _ = pair
    np.testing.assert_allclose(softmax(x), softmax(x + c), atol=1e-12)


@given(vec, unit)
def test_np_is_between_inputs(pair, eta):
    c, u = pair
    out = negative_prompt_mix(c, u, eta)
    assert np.all(out >= np.minimum(c, u) - 1e-9) and np.all(out <= np.maximum(c, u) + 1e-9)


@given(vec)
def test_exact_reductions(pair):
    a, b = pair
    assert np.array_equal(contrastive_expert_guidance(a, b, 0.0), a)
    assert np.array_equal(negative_prompt_mix(a, b, 1.0), b)
    assert np.array_equal(negative_prompt_mix(a, b, 0.0), a)
    assert np.array_equal(cfg_guidance(a, b, 1.0), b)
    assert np.array_equal(cfg_guidance(a, b, 0.0), a)


@given(vec, st.floats(1e-6, 1.0), st.integers(1, 12))
def test_filters_keep_argmax(pair, p, k):
    x, _ = pair
    assert np.isfinite(nucleus_filter(x, p)[np.argmax(x)])
    assert np.isfinite(top_k_filter(x, min(k, len(x)))[np.argmax(x)])


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 1)), min_size=2, max_size=40))
def test_auroc_symmetry(items):
    scores = np.array([s for s, _ in items], float)
    labels = np.array([y for _, y in items])
    if labels.min() == labels.max():
        return
    assert abs(rank_auroc(scores, 1 - labels) - (1 - rank_auroc(scores, labels))) < 1e-15


@given(st.lists(st.lists(st.sampled_from("abc"), max_size=10), min_size=1, max_size=8), st.integers(1, 4))
def test_norm_ngrams_in_unit_interval(data, n):
    data = [d for d in data if len(d) >= n] or [["a"] * n]
    v = normalized_ngrams(data, n)
    assert 0.0 <= v <= 1.0
    assert normalized_ngrams(data + data, n) > v


@given(st.integers(0, 2**64 - 1), st.integers(1, 10**6))
@settings(max_examples=50)
def test_randbelow_range(seed, n):
    rng = Xoshiro256(seed)
    assert all(0 <= rng.randbelow(n) < n for _ in range(5))


@given(st.text(alphabet=st.sampled_from(["\n", "#", "a", "\\"]), max_size=30))
def test_escape_removes_separator(text):
    out = escape_separator(text)
    assert SEPARATOR not in out
    assert escape_separator(out) == out


@given(st.text(), st.one_of(st.none(), st.text()))
def test_record_json_round_trip(text, label):
    rec = DatasetRecord("x", text, label)
    d = json.loads(rec.to_json())
    assert d["text"] == text and d.get("label") == label
