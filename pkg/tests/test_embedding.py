import numpy as np
import pytest

from atrgraph.embedding import DEFAULT_EMBEDDER, HashingEmbedder, embed_many, tokenize


def _collision_free_sets(emb: HashingEmbedder, size: int) -> tuple[list[str], list[str]]:
    """Two token sets whose buckets are pairwise disjoint, found by search."""
    used: set[int] = set()
    picked: list[str] = []
    i = 0
    while len(picked) < 2 * size:
        tok = f"tok{i}"
        b = emb.bucket(tok)
        if b not in used:
            used.add(b)
            picked.append(tok)
        i += 1
    return picked[:size], picked[size:]


def test_tokenize():
    assert tokenize("Restart <GUID> on host-7!") == ["restart", "guid", "on", "host", "7"]


def test_unit_norm_and_deterministic():
    v = DEFAULT_EMBEDDER.embed("Restart gateway")
    assert v.shape == (256,)
    assert np.isclose(np.linalg.norm(v), 1.0)
    assert np.array_equal(v, HashingEmbedder().embed("Restart gateway"))


def test_identical_texts_distance_zero():
    a = DEFAULT_EMBEDDER.embed("drain replica")
    b = DEFAULT_EMBEDDER.embed("drain replica")
    assert 1.0 - float(a @ b) == pytest.approx(0.0, abs=1e-12)


def test_disjoint_tokens_orthogonal():
    emb = HashingEmbedder()
    left, right = _collision_free_sets(emb, 6)
    sim = float(emb.embed(" ".join(left)) @ emb.embed(" ".join(right)))
    assert sim < 0.05


def test_case_and_punctuation_insensitive():
    a = DEFAULT_EMBEDDER.embed("Restart, GATEWAY")
    b = DEFAULT_EMBEDDER.embed("restart gateway")
    assert np.allclose(a, b)


@pytest.mark.parametrize("text", ["", "   ", "--"])
def test_empty_text_rejected(text):
    with pytest.raises(ValueError):
        DEFAULT_EMBEDDER.embed(text)


def test_embed_many_shapes():
    assert embed_many(DEFAULT_EMBEDDER, []).shape == (0, 256)
    assert embed_many(DEFAULT_EMBEDDER, ["a b", "c"]).shape == (2, 256)


def test_provider_without_batch_method():
    class Plain:
        provider_id, dim = "plain", 4

        def embed(self, text):
            return np.ones(4) / 2

    assert embed_many(Plain(), ["x", "y"]).shape == (2, 4)
