import numpy as np
import pytest

from seedvote.encoder import EncoderConfig, encode_hashed, fnv1a_64, load_embeddings, tokenize
from seedvote.errors import InputError


@pytest.mark.parametrize(
    "text,expected",
    [("", 0xCBF29CE484222325), ("a", 0xAF63DC4C8601EC8C), ("foobar", 0x85944171F73967E8)],
)
def test_fnv_reference_vectors(text, expected):
    assert fnv1a_64(text.encode()) == expected


def test_good_index_and_sign():
    # Independent big-int evaluation gives 0x9ce4d6720e9c9118: index 0 at d=8, bit 63 set.
    v = encode_hashed("good", EncoderConfig(d=8, ngram_orders=(1,)))
    assert v.tolist() == [-1.0, 0, 0, 0, 0, 0, 0, 0]


def test_empty_text_zero_vector():
    assert not encode_hashed("").any()
    assert not encode_hashed("   \t ... ").any()
    assert encode_hashed("").shape == (256,)


@pytest.mark.parametrize("text", ["good", "Not good at all!", "¡Qué película tan rara!", "a a a a"])
def test_unit_norm(text):
    assert np.linalg.norm(encode_hashed(text)) == pytest.approx(1.0, abs=1e-6)


def test_tokenizer_strips_punctuation_and_lowercases():
    assert tokenize("  Hello, World!! (really) -- ok ") == ["hello", "world", "really", "ok"]
    assert tokenize("don't") == ["don't"]


def test_pure_and_order_sensitive():
    a = encode_hashed("not good")
    assert np.array_equal(a, encode_hashed("not good"))
    assert not np.array_equal(a, encode_hashed("good not"))


def test_unigrams_only_order_insensitive():
    cfg = EncoderConfig(ngram_orders=(1,))
    assert np.array_equal(encode_hashed("not good", cfg), encode_hashed("good not", cfg))


def test_token_disjoint_pairs_mostly_orthogonal():
    rng = np.random.default_rng(0)
    cfg = EncoderConfig(d=2**16)
    zero = 0
    for trial in range(100):
        a = " ".join(f"u{trial}x{rng.integers(10**6)}" for _ in range(rng.integers(1, 11)))
        b = " ".join(f"v{trial}y{rng.integers(10**6)}" for _ in range(rng.integers(1, 11)))
        zero += encode_hashed(a, cfg) @ encode_hashed(b, cfg) == 0
    assert zero >= 90


def test_config_validation():
    with pytest.raises(InputError):
        EncoderConfig(d=1)
    with pytest.raises(InputError):
        EncoderConfig(ngram_orders=(3,))
    with pytest.raises(InputError):
        encode_hashed("x", EncoderConfig(kind="precomputed", embeddings_path="e.tsv"))


def _write(tmp_path, body):
    p = tmp_path / "emb.tsv"
    p.write_text(body)
    return p


def test_load_embeddings(tmp_path):
    m = load_embeddings(_write(tmp_path, "dim=4\ns1\t0.1 0.2 0.3 0.4\n"))
    assert list(m) == ["s1"]
    assert m["s1"].tolist() == [0.1, 0.2, 0.3, 0.4]


def test_embeddings_dim_mismatch(tmp_path):
    with pytest.raises(InputError, match="row 2"):
        load_embeddings(_write(tmp_path, "dim=4\ns1\t0.1 0.2 0.3\n"))


def test_embeddings_duplicate(tmp_path):
    with pytest.raises(InputError, match="duplicate"):
        load_embeddings(_write(tmp_path, "dim=2\ns1\t1 2\ns1\t3 4\n"))


def test_embeddings_non_numeric(tmp_path):
    with pytest.raises(InputError, match="non-numeric"):
        load_embeddings(_write(tmp_path, "dim=2\ns1\t1 abc\n"))
