import hashlib
import json

import httpx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from autocot.cache import DiskCache
from autocot.embed import HashBowEmbedder, RemoteEmbedder, embed_corpus, l2_normalize
from autocot.errors import BackendUnavailable, ZeroVector

from conftest import make_question


def reference_hashbow(text: str, dim: int, seed: int) -> np.ndarray:
    """Independent re-derivation of the hashed bag-of-words recipe."""
    v = np.zeros(dim)
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    for token in text.split():
        digest = hashlib.blake2b(token.encode(), digest_size=8, key=key).digest()
        h = int.from_bytes(digest, "big")
        v[h % dim] += 1.0 if (h >> 63) & 1 == 0 else -1.0
    return v / np.linalg.norm(v)


class TestL2Normalize:
    def test_three_four_five(self):
        assert np.allclose(l2_normalize(np.array([3.0, 4.0])), [0.6, 0.8])

    def test_unit_vector_unchanged(self):
        v = np.array([0.0, 1.0, 0.0])
        assert np.allclose(l2_normalize(v), v)

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            l2_normalize(np.zeros(3))


class TestHashBow:
    def test_deterministic(self):
        emb = HashBowEmbedder(dim=16, seed=3)
        assert np.array_equal(emb.embed("two trains leave"), emb.embed("two trains leave"))

    def test_order_invariant(self):
        emb = HashBowEmbedder(dim=8, seed=7)
        assert np.array_equal(emb.embed("a b"), emb.embed("b a"))

    def test_cosine_cats_networking(self):
        # Both tokens land in bucket 4 with opposite signs under (dim=8, seed=7):
        # cosine is exactly -1. Value frozen from an independent scratch run.
        emb = HashBowEmbedder(dim=8, seed=7)
        a, b = emb.embed("cats"), emb.embed("networking")
        assert float(np.dot(a, b)) == pytest.approx(-1.0)
        assert np.allclose(a, reference_hashbow("cats", 8, 7))
        assert np.allclose(b, reference_hashbow("networking", 8, 7))

    def test_matches_reference_recipe(self):
        emb = HashBowEmbedder(dim=32, seed=11)
        text = "how many pieces of candy do they have left"
        assert np.allclose(emb.embed(text), reference_hashbow(text, 32, 11))

    def test_dim_validation(self):
        with pytest.raises(ValueError):
            HashBowEmbedder(dim=1)


class TestEmbedCorpus:
    def test_unit_norms_and_alignment(self):
        questions = [make_question(i, f"question number {i} about apples") for i in range(3)]
        vectors = embed_corpus(questions, HashBowEmbedder(dim=16, seed=0))
        assert vectors.shape == (3, 16)
        for row in vectors:
            assert abs(np.linalg.norm(row) - 1.0) < 1e-9

    def test_duplicate_texts_identical(self):
        questions = [
            make_question(0, "the same question"),
            make_question(1, "the same question"),
        ]
        vectors = embed_corpus(questions, HashBowEmbedder(dim=16, seed=0))
        assert np.array_equal(vectors[0], vectors[1])

    def test_no_collisions_on_distinct_corpus(self):
        # hash-collision check over a 600-question corpus: texts differing in
        # several tokens must keep pairwise-distinct vectors
        questions = [
            make_question(
                i,
                f"Worker{i} packs {i} boxes of part{i % 37} with {i + 3} "
                f"items each, how many items in total?",
            )
            for i in range(600)
        ]
        vectors = embed_corpus(questions, HashBowEmbedder(dim=256, seed=0))
        assert len(np.unique(vectors, axis=0)) == 600

    def test_parallel_matches_sequential(self):
        questions = [make_question(i, f"count to {i} twice") for i in range(20)]
        emb = HashBowEmbedder(dim=32, seed=5)
        assert np.array_equal(
            embed_corpus(questions, emb, max_workers=4),
            embed_corpus(questions, emb, max_workers=1),
        )

    @given(st.integers(0, 2**32 - 1))
    def test_squared_distance_is_two_minus_two_cosine(self, seed):
        rng = np.random.default_rng(seed)
        a = l2_normalize(rng.standard_normal(6))
        b = l2_normalize(rng.standard_normal(6))
        dist_sq = float(np.sum((a - b) ** 2))
        cos = float(np.dot(a, b))
        assert dist_sq == pytest.approx(2.0 - 2.0 * cos, abs=1e-9)

    @given(st.integers(0, 2**32 - 1))
    def test_euclidean_and_cosine_rank_identically(self, seed):
        rng = np.random.default_rng(seed)
        query = l2_normalize(rng.standard_normal(5))
        candidates = [l2_normalize(rng.standard_normal(5)) for _ in range(8)]
        by_distance = sorted(
            range(8), key=lambda i: (float(np.sum((query - candidates[i]) ** 2)), i)
        )
        by_cosine = sorted(
            range(8), key=lambda i: (-float(np.dot(query, candidates[i])), i)
        )
        assert by_distance == by_cosine


def _mock_embed_transport(calls: list, dim: int = 4, fail_times: int = 0):
    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(json.loads(request.content))
        if len(calls) <= fail_times:
            return httpx.Response(500, text="boom")
        text = calls[-1]["input"][0]
        vec = [float(len(text)), 1.0, 0.0, 0.0][:dim]
        return httpx.Response(200, json={"data": [{"embedding": vec}]})

    return httpx.MockTransport(handler)


class TestRemoteEmbedder:
    def test_request_shape_and_response(self):
        calls: list = []
        client = httpx.Client(transport=_mock_embed_transport(calls))
        emb = RemoteEmbedder("http://svc/embed", "enc-small", client=client)
        vec = emb.embed("hello world")
        assert calls[0] == {"model": "enc-small", "input": ["hello world"]}
        assert vec.shape == (4,)
        assert emb.dim == 4

    def test_retries_then_succeeds(self):
        calls: list = []
        client = httpx.Client(transport=_mock_embed_transport(calls, fail_times=2))
        emb = RemoteEmbedder(
            "http://svc/embed", "enc", client=client, backoff=0.001
        )
        emb.embed("hello")
        assert len(calls) == 3

    def test_backend_unavailable_after_retries(self):
        calls: list = []
        client = httpx.Client(transport=_mock_embed_transport(calls, fail_times=99))
        emb = RemoteEmbedder(
            "http://svc/embed", "enc", client=client, backoff=0.001
        )
        with pytest.raises(BackendUnavailable):
            emb.embed("hello")
        assert len(calls) == 3

    def test_cache_prevents_second_call(self, tmp_path):
        calls: list = []
        client = httpx.Client(transport=_mock_embed_transport(calls))
        cache = DiskCache(tmp_path / "embcache")
        emb = RemoteEmbedder("http://svc/embed", "enc", client=client, cache=cache)
        first = emb.embed("same text")
        second = emb.embed("same text")
        assert len(calls) == 1
        assert np.array_equal(first, second)
