import itertools

import numpy as np
import pytest

from steer.decoding import (
    SamplerConfig,
    StopCriteria,
    apply_temperature,
    contrastive_search_step,
    filter_logits,
    generate_sequence,
    greedy,
    model_source,
    nucleus_filter,
    sample_token,
    softmax,
    steer_source,
    top_k_filter,
)
from steer.errors import (
    AllMasked,
    ContextOverflow,
    InvalidK,
    InvalidP,
    MissingEmbeddings,
    NonPositiveTemperature,
    ValidationError,
)
from steer.guidance import ConditioningPrompt, GuidanceParams, ModelPair
from steer.lm import train
from steer.rng import Xoshiro256
from steer.vocab import BOS, Vocabulary, detokenize, tokenize

NEG = -np.inf


def test_temperature():
    x = np.array([0.0, -1.0])
    np.testing.assert_array_equal(apply_temperature(x, 1.0), x)
    np.testing.assert_array_equal(apply_temperature(x, 0.5), [0.0, -2.0])
    assert softmax(apply_temperature(x, 0.5))[0] > softmax(x)[0]
    p = softmax(apply_temperature(np.log([0.9, 0.05, 0.05]), 1e6))
    assert p.max() - p.min() < 1e-5
    with pytest.raises(NonPositiveTemperature):
        apply_temperature(x, 0.0)


def test_top_k():
    x = np.log([0.4, 0.4, 0.2])
    np.testing.assert_array_equal(top_k_filter(x, 3), x)
    out = top_k_filter(x, 1)
    assert np.isfinite(out).tolist() == [True, False, False]
    with pytest.raises(InvalidK):
        top_k_filter(x, 0)
    with pytest.raises(InvalidK):
        top_k_filter(x, 4)


def test_top_k_one_equals_greedy(rng):
    for _ in range(20):
        x = rng.normal(size=8)
        assert sample_token(top_k_filter(x, 1), Xoshiro256(1)) == greedy(x)


def test_nucleus_examples():
    x = np.log([0.5, 0.3, 0.2])
    np.testing.assert_array_equal(nucleus_filter(x, 1.0), x)
    assert np.isfinite(nucleus_filter(x, 0.7)).tolist() == [True, True, False]
    hot = np.array([0.0, NEG, NEG])
    for p in (0.01, 0.5, 0.99):
        assert np.isfinite(nucleus_filter(hot, p)).tolist() == [True, False, False]
    with pytest.raises(InvalidP):
        nucleus_filter(x, 0.0)
    with pytest.raises(InvalidP):
        nucleus_filter(x, 1.5)


def brute_force_nucleus_size(probs, p):
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    for size in range(1, len(probs) + 1):
        if sum(probs[i] for i in order[:size]) >= p:
            return size
    return len(probs)


def test_nucleus_minimality(rng):
    for _ in range(200):
        probs = rng.dirichlet(np.full(6, 0.7))
        p = float(rng.uniform(0.05, 0.99))
        kept = np.isfinite(nucleus_filter(np.log(probs), p))
        assert kept[np.argmax(probs)]
        assert kept.sum() == brute_force_nucleus_size(probs, p)
        mass = probs[kept].sum()
        smallest = probs[kept].min()
        if kept.sum() > 1:
            assert mass - smallest < p


def test_nucleus_tiny_p_is_greedy(rng):
    for _ in range(30):
        x = rng.normal(size=10)
        assert sample_token(nucleus_filter(x, 1e-12), Xoshiro256(3)) == greedy(x)


def test_greedy():
    assert greedy(np.log([0.1, 0.9])) == 1
    assert greedy(np.zeros(4)) == 0
    with pytest.raises(AllMasked):
        greedy(np.full(3, NEG))


def test_sample_token_basics():
    assert sample_token(np.array([NEG, 0.3, NEG]), Xoshiro256(9)) == 1
    x = np.log([0.2, 0.5, 0.3])
    assert [sample_token(x, Xoshiro256(4)) for _ in range(3)] == [sample_token(x, Xoshiro256(4))] * 3
    with pytest.raises(AllMasked):
        sample_token(np.full(2, NEG), Xoshiro256(0))


def test_sample_token_frequencies():
    rng = Xoshiro256(2024)
    x = np.zeros(4)
    counts = np.bincount([sample_token(x, rng) for _ in range(100_000)], minlength=4)
    np.testing.assert_allclose(counts / 100_000, 0.25, atol=0.01)


def test_contrastive_search():
    emb = np.array([[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]])
    logp = np.log([0.45, 0.45, 0.10])
    # candidates 0 and 1 tie; context [0] penalises token 0 against itself
    assert contrastive_search_step(logp, [0], 2, 1.0, emb) == 1
    assert contrastive_search_step(logp, [0], 2, 0.0, emb) == 0
    assert contrastive_search_step(logp, [], 2, 1.0, emb) == 0
    for alpha in (0.0, 0.5, 1.0):
        assert contrastive_search_step(logp, [0, 1], 1, alpha, emb) == 0
    with pytest.raises(MissingEmbeddings):
        contrastive_search_step(logp, [0], 2, 0.5, None)
    with pytest.raises(MissingEmbeddings):
        contrastive_search_step(logp, [0], 2, 0.5, emb[:2])


def test_contrastive_search_alpha0_is_greedy(rng):
    emb = rng.normal(size=(8, 3))
    for _ in range(20):
        x = rng.normal(size=8)
        assert contrastive_search_step(x, [1, 2], 4, 0.0, emb) == greedy(x)


def test_sampler_config_validation():
    with pytest.raises(InvalidP):
        SamplerConfig(p=0.0)
    with pytest.raises(InvalidK):
        SamplerConfig(k=0)
    with pytest.raises(NonPositiveTemperature):
        SamplerConfig(temperature=-1)
    with pytest.raises(ValidationError):
        SamplerConfig(method="beam")
    assert SamplerConfig().fingerprint() != SamplerConfig(p=0.9).fingerprint()


def test_filter_soundness(rng):
    for method in ("top_k", "nucleus"):
        for _ in range(50):
            x = rng.normal(size=12)
            cfg = SamplerConfig(method=method, p=float(rng.uniform(0.01, 1)), k=int(rng.integers(1, 13)))
            assert np.isfinite(filter_logits(x, cfg)[np.argmax(x)])


@pytest.fixture(scope="module")
def abab():
    return train(["ababab"], order=2, cache_weight=0.0, smoothing_alpha=0.01,
                 vocab=Vocabulary.build(["ab"], base_alphabet=False))


def test_generate_greedy_chain(abab):
    v = abab.vocab
    prompt = [BOS] + tokenize("a", v)
    out = generate_sequence(model_source(abab, prompt), prompt, SamplerConfig(method="greedy"),
                            StopCriteria(max_new_tokens=7))
    assert detokenize(out, v) == "bababab"


def test_generate_zero_tokens(abab):
    assert generate_sequence(model_source(abab, []), [], SamplerConfig(), StopCriteria(max_new_tokens=0)) == []


def test_generate_stops_at_eos():
    v = Vocabulary.build(["ab"], base_alphabet=False)
    m = train(["ab"], order=3, cache_weight=0.0, smoothing_alpha=1e-9, vocab=v)
    out = generate_sequence(model_source(m, [BOS]), [BOS], SamplerConfig(method="greedy"),
                            StopCriteria(max_new_tokens=20))
    assert detokenize(out, v) == "ab"


def test_generate_budget(abab):
    with pytest.raises(ContextOverflow):
        generate_sequence(model_source(abab, []), [1] * 10, SamplerConfig(), StopCriteria(max_new_tokens=10),
                          context_size=15)


def test_generate_deterministic(toy_model):
    cfg = SamplerConfig(method="nucleus", p=0.95, seed=77)
    stop = StopCriteria(max_new_tokens=40)
    prompt = [BOS]
    runs = [generate_sequence(model_source(toy_model, prompt), prompt, cfg, stop) for _ in range(3)]
    assert runs[0] == runs[1] == runs[2]
    other = generate_sequence(model_source(toy_model, prompt), prompt, SamplerConfig(seed=78), stop)
    assert isinstance(other, list)


def test_generate_bans_tokens(toy_model):
    v = toy_model.vocab
    banned = [v.id("t"), v.id("h")]
    out = generate_sequence(model_source(toy_model, [BOS]), [BOS], SamplerConfig(method="greedy"),
                            StopCriteria(max_new_tokens=30), banned_tokens=banned)
    assert not set(out) & set(banned)


def test_steer_source_gamma0_eta1_keeps_ordering():
    vocab = Vocabulary.build(["the cat sat", "a dog ran"])
    pair = ModelPair(train(["the cat sat"], order=3, vocab=vocab), train(["a dog ran"], order=3, vocab=vocab))
    prompt = ConditioningPrompt(tuple(tokenize("x", vocab)), tuple(tokenize("a dog", vocab)))
    src = steer_source(pair, prompt, GuidanceParams(0.0, 1.0))
    plain = model_source(pair.domain, prompt.positive)
    for generated in ([], tokenize("th", vocab), tokenize("the c", vocab)):
        a, b = src(generated), plain(generated)
        assert np.array_equal(np.argsort(-a, kind="stable"), np.argsort(-b, kind="stable"))
        for p in (0.5, 0.9):
            # squaring sharpens, so the steered nucleus is a prefix-subset of the plain one
            kept_a = np.isfinite(nucleus_filter(a, p))
            kept_b = np.isfinite(nucleus_filter(b, p))
            assert np.all(kept_b[kept_a])
            np.testing.assert_array_equal(kept_a, np.isfinite(nucleus_filter(2 * b, p)))


def test_all_subsets_oracle_small():
    probs = np.array([0.3, 0.3, 0.25, 0.15])
    for p in (0.3, 0.31, 0.6, 0.61, 0.85, 0.851, 1.0):
        kept = np.isfinite(nucleus_filter(np.log(probs), p))
        best = min(
            (s for r in range(1, 5) for s in itertools.combinations(range(4), r) if probs[list(s)].sum() >= p - 1e-15),
            key=lambda s: (len(s), -probs[list(s)].sum()),
        )
        assert kept.sum() == len(best)
