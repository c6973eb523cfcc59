import math

import numpy as np
import pytest

from steer.embeddings import (
    CACHE_MAGIC,
    Embedder,
    EmbedderConfig,
    EmbeddingCache,
    _bucket,
    canonical,
    from_float32,
    unit_float32,
    embed_builtin,
    embed_external,
    fit_idf,
    mean_embedding,
    ppmi,
    token_embedding_table,
)
from steer.errors import (
    DegenerateEmbedding,
    EmptyCorpus,
    EmptySet,
    EmptyText,
    NonFiniteEmbedding,
    ShapeMismatch,
    ValidationError,
)
from steer.metrics import evaluate_pair
from steer.remote import RemoteBackend


def test_builtin_basics():
    cfg = EmbedderConfig()
    a = embed_builtin("hello world", cfg)
    assert np.array_equal(a, embed_builtin("hello world", cfg))
    assert abs(np.linalg.norm(a) - 1) < 1e-9
    assert a @ a == pytest.approx(1.0)
    with pytest.raises(EmptyText):
        embed_builtin("", cfg)
    with pytest.raises(EmptyText):
        embed_builtin("   ", cfg)


def test_unigram_cosine_oracle():
    cfg = EmbedderConfig(ngram_range=(1, 1))
    assert _bucket("a", cfg.hash_seed, cfg.dim) != _bucket("b", cfg.hash_seed, cfg.dim)
    a, ab = embed_builtin("a", cfg), embed_builtin("ab", cfg)
    assert a @ ab == pytest.approx(1 / math.sqrt(2), abs=1e-6)


def test_degenerate_text():
    with pytest.raises(DegenerateEmbedding):
        embed_builtin("ab", EmbedderConfig(ngram_range=(3, 3)))


def test_config_validation():
    with pytest.raises(ValidationError):
        EmbedderConfig(ngram_range=(0, 2))
    with pytest.raises(ValidationError):
        EmbedderConfig(ngram_range=(3, 6))
    with pytest.raises(ValidationError):
        EmbedderConfig(dim=4)
    with pytest.raises(ValidationError):
        EmbedderConfig(dim=8, idf=(1.0,))
    assert EmbedderConfig().fingerprint() != EmbedderConfig(hash_seed=1).fingerprint()
    assert EmbedderConfig(max_batch=2).fingerprint() == EmbedderConfig().fingerprint()


def test_idf_changes_vector():
    cfg = EmbedderConfig(dim=64)
    texts = ["the cat", "the dog", "the bird"]
    idf = fit_idf(texts, cfg)
    weighted = EmbedderConfig(dim=64, idf=idf)
    assert not np.allclose(embed_builtin("the cat", cfg), embed_builtin("the cat", weighted))


def test_canonical_depends_only_on_float32_rounding(rng):
    for _ in range(200):
        raw = rng.normal(size=rng.integers(8, 64))
        v32 = unit_float32(raw)
        assert v32.dtype == np.float32
        assert np.array_equal(canonical(raw), from_float32(v32))
        assert abs(np.linalg.norm(canonical(raw)) - 1) < 1e-12
    with pytest.raises(NonFiniteEmbedding):
        canonical([np.nan, 1.0])
    with pytest.raises(DegenerateEmbedding):
        canonical(np.zeros(4))


def test_cache_bit_identical_and_header(tmp_path):
    cfg = EmbedderConfig()
    cache = EmbeddingCache(tmp_path)
    texts = ["alpha beta", "gamma", "alpha beta"]
    fresh = Embedder(cfg).embed(texts)
    first = Embedder(cfg, cache=cache).embed(texts)
    second = Embedder(cfg, cache=cache).embed(texts)
    assert np.array_equal(fresh, first) and np.array_equal(first, second)
    files = sorted(p for p in tmp_path.iterdir())
    assert len(files) == 2
    raw = files[0].read_bytes()
    assert raw[:4] == CACHE_MAGIC
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:12], "little") == cfg.dim
    assert len(raw) == 16 + 4 * cfg.dim


def test_cache_ignores_bad_entries(tmp_path):
    cache = EmbeddingCache(tmp_path)
    key = EmbeddingCache.key("x", "fp")
    (tmp_path / key).write_bytes(b"junk")
    assert cache.get(key, 8) is None


def test_cache_transparent_for_metrics(tmp_path):
    real = [f"sample text number {i} about stars" for i in range(30)]
    synth = [f"another line {i} on soup and bread" for i in range(30)]
    plain = evaluate_pair(real, synth).to_dict()
    cached = evaluate_pair(real, synth, embedder=Embedder(cache=EmbeddingCache(tmp_path))).to_dict()
    again = evaluate_pair(real, synth, embedder=Embedder(cache=EmbeddingCache(tmp_path))).to_dict()
    assert plain == cached == again


def one_hot_server(fake_server, dim, wrong=False):
    def handler(route, body):
        rows = []
        for t in body["texts"]:
            v = [0.0] * (dim + (1 if wrong else 0))
            v[len(t) % dim] = 2.0
            rows.append(v)
        return 200, {"embeddings": rows}

    return fake_server(handler)


def test_external_order_and_normalisation(fake_server):
    srv = one_hot_server(fake_server, 8)
    cfg = EmbedderConfig(kind="external", dim=8)
    out = embed_external(["a", "abc", "ab"], RemoteBackend(srv.url), cfg)
    assert [int(np.argmax(v)) for v in out] == [1, 3, 2]
    assert all(abs(np.linalg.norm(v) - 1) < 1e-12 for v in out)


def test_external_cache_skips_network(fake_server, tmp_path):
    srv = one_hot_server(fake_server, 8)
    cfg = EmbedderConfig(kind="external", dim=8)
    emb = Embedder(cfg, cache=EmbeddingCache(tmp_path), backend=RemoteBackend(srv.url))
    first = emb.embed(["a", "bb"])
    assert len(srv.calls) == 1
    second = emb.embed(["bb", "a"])
    assert len(srv.calls) == 1
    assert np.array_equal(first[::-1], second)
    emb.embed(["a", "ccc"])
    assert srv.calls[-1] == ("/embed", {"texts": ["ccc"]})


def test_external_errors(fake_server):
    srv = one_hot_server(fake_server, 8, wrong=True)
    cfg = EmbedderConfig(kind="external", dim=8, max_batch=2)
    with pytest.raises(ShapeMismatch):
        embed_external(["a"], RemoteBackend(srv.url), cfg)
    with pytest.raises(ValidationError):
        embed_external(["a", "b", "c"], RemoteBackend(srv.url), cfg)
    with pytest.raises(ValidationError):
        Embedder(cfg).embed(["a"])


def test_external_batches_split(fake_server):
    srv = one_hot_server(fake_server, 8)
    cfg = EmbedderConfig(kind="external", dim=8, max_batch=2)
    out = Embedder(cfg, backend=RemoteBackend(srv.url)).embed(["a", "b", "c", "d", "e"])
    assert out.shape == (5, 8) and len(srv.calls) == 3


def test_mean_embedding(rng):
    v = rng.normal(size=5)
    np.testing.assert_array_equal(mean_embedding([v]), v)
    np.testing.assert_array_equal(mean_embedding([v, -v]), np.zeros(5))
    np.testing.assert_allclose(mean_embedding(np.eye(3)), np.full(3, 1 / 3))
    with pytest.raises(EmptySet):
        mean_embedding(np.zeros((0, 3)))


def brute_ppmi(seqs, V, window=2):
    C = np.zeros((V, V))
    for s in seqs:
        for i in range(len(s)):
            for j in range(len(s)):
                if i != j and abs(i - j) <= window:
                    C[s[i], s[j]] += 1
    total = C.sum()
    out = np.zeros_like(C)
    for a in range(V):
        for b in range(V):
            if C[a, b] > 0:
                out[a, b] = max(0.0, math.log(C[a, b] * total / (C[a].sum() * C[:, b].sum())))
    return out, C


def test_token_table_dense_oracle():
    seqs = [[0, 1, 2], [2, 1, 0, 1], [1, 2, 2]]
    M, _ = brute_ppmi(seqs, 3)
    np.testing.assert_allclose(ppmi(brute_ppmi(seqs, 3)[1]), M, atol=1e-12)
    table = token_embedding_table(seqs, 3, dim=8)
    # rows are U*S of the PPMI matrix, so their Gram matrix is M M^T, free of sign choices
    norms = np.linalg.norm(M, axis=1)
    live = norms > 0
    cos = (M[live] @ M[live].T) / np.outer(norms[live], norms[live])
    np.testing.assert_allclose(table[live] @ table[live].T, cos, atol=1e-6)
    u, s, _ = np.linalg.svd(M)
    ref = u * s
    for j in range(3):
        col = table[live][:, j] * np.linalg.norm(ref[live], axis=1)
        assert np.allclose(col, ref[live][:, j], atol=1e-6) or np.allclose(col, -ref[live][:, j], atol=1e-6)


def test_token_table_degenerate_and_symmetric():
    seqs = [[0, 1], [2, 1], [3]]
    table = token_embedding_table(seqs, 5, dim=4)
    np.testing.assert_array_equal(table[3], [1, 0, 0, 0])
    np.testing.assert_array_equal(table[4], [1, 0, 0, 0])
    assert table[0] @ table[2] == pytest.approx(1.0)
    assert np.array_equal(table, token_embedding_table(seqs, 5, dim=4))
    with pytest.raises(EmptyCorpus):
        token_embedding_table([], 5)
    with pytest.raises(EmptyCorpus):
        token_embedding_table([[]], 5)
