"""Tokenization, dictionary ranking, and file-format round trips."""

import random
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deeporigin.errors import DataError, DimensionError
from deeporigin.vectorizer import (
    FeatureVector,
    TokenDictionary,
    VectorRecord,
    build_dictionary,
    densify_batch,
    read_dictionary,
    read_vector_file,
    sparsify,
    tokenize_report,
    vectorize,
    write_dictionary,
    write_vector_file,
)


def brute_force_dictionary(corpus, cap):
    """Independent oracle: count, filter ubiquitous, full sort, truncate."""
    counts = {}
    for report in corpus:
        for token in report:
            counts[token] = counts.get(token, 0) + 1
    kept = {t: c for t, c in counts.items() if c < len(corpus)}
    ranked = sorted(kept.items(), key=lambda tc: (-tc[1], tc[0]))
    return ranked[:cap]


# ---------------------------------------------------------------------------
# tokenize_report
# ---------------------------------------------------------------------------

def test_tokenize_json_snippet():
    assert tokenize_report('{"api":"CreateFile","port":445}') == {
        "api", "createfile", "port", "445",
    }


def test_tokenize_empty():
    assert tokenize_report("") == set()


def test_tokenize_set_semantics_and_lowercasing():
    assert tokenize_report('{"a":"x x X"}') == {"a", "x"}


def test_tokenize_accepts_bytes():
    assert tokenize_report(b"GET /a_b?x=1") == {"get", "a_b", "x", "1"}


def test_tokenize_invalid_utf8_names_offset():
    with pytest.raises(DataError, match="byte 3"):
        tokenize_report(b"abc\xff\xfe")


def test_tokenize_underscores_and_digits_stay_joined():
    assert tokenize_report("HKEY_LOCAL_MACHINE\\Run 127.0.0.1") == {
        "hkey_local_machine", "run", "127", "0", "1",
    }


# ---------------------------------------------------------------------------
# build_dictionary
# ---------------------------------------------------------------------------

def test_dictionary_ubiquity_removal_and_cap():
    corpus = [{"a", "b"}, {"a", "c"}, {"a", "d"}]
    d = build_dictionary(corpus, cap=2)
    assert d.entries == (("b", 1), ("c", 1))


def test_dictionary_cap_above_vocabulary():
    d = build_dictionary([{"a", "b"}, {"a", "c"}], cap=10)
    assert d.entries == (("b", 1), ("c", 1))


def test_dictionary_all_ubiquitous():
    with pytest.raises(DataError, match="no informative tokens"):
        build_dictionary([{"a"}, {"a"}], cap=5)


def test_dictionary_empty_corpus():
    with pytest.raises(DataError, match="empty corpus"):
        build_dictionary([], cap=5)


def test_dictionary_frequency_rank_before_lexicographic():
    corpus = [{"z", "m"}, {"z", "q"}, {"k"}]
    d = build_dictionary(corpus, cap=10)
    assert d.tokens == ["z", "k", "m", "q"]  # df 2 first, then df-1 ties sorted


def test_dictionary_matches_brute_force_oracle_random():
    rnd = random.Random(99)
    for _ in range(10):
        vocab = [f"t{i}" for i in range(rnd.randint(2, 40))]
        corpus = [
            set(rnd.sample(vocab, rnd.randint(1, len(vocab))))
            for _ in range(rnd.randint(2, 12))
        ]
        cap = rnd.randint(1, 50)
        try:
            got = build_dictionary(corpus, cap=cap).entries
        except DataError:
            assert not brute_force_dictionary(corpus, cap)
            continue
        assert list(got) == brute_force_dictionary(corpus, cap)


@settings(max_examples=60, deadline=None)
@given(
    corpus=st.lists(
        st.sets(st.sampled_from("abcdefgh"), min_size=1), min_size=1, max_size=8
    ),
    cap=st.integers(min_value=1, max_value=10),
)
def test_dictionary_order_independent(corpus, cap):
    reordered = list(reversed(corpus))
    try:
        d1 = build_dictionary(corpus, cap=cap)
    except DataError:
        with pytest.raises(DataError):
            build_dictionary(reordered, cap=cap)
        return
    d2 = build_dictionary(reordered, cap=cap)
    assert d1.entries == d2.entries


# ---------------------------------------------------------------------------
# vectorize / FeatureVector
# ---------------------------------------------------------------------------

def _dict(*tokens):
    return TokenDictionary(entries=tuple((t, 1) for t in tokens))


def test_vectorize_hits_and_misses():
    v = vectorize({"a", "c"}, _dict("b", "c"))
    assert v.dimension == 2 and v.set_indices == (1,)


def test_vectorize_empty_tokens():
    v = vectorize(set(), _dict("b", "c", "d"))
    assert v.set_indices == ()
    assert not v.densify().any()


def test_vectorize_full_coverage():
    v = vectorize({"b", "c"}, _dict("b", "c"))
    assert v.set_indices == (0, 1)
    np.testing.assert_array_equal(v.densify(), [1.0, 1.0])


def test_vectorize_training_rows_keep_a_zero_bit():
    corpus = [{"a", "b"}, {"a", "c"}, {"b", "c"}]
    d = build_dictionary(corpus, cap=100)
    for report in corpus:
        v = vectorize(report, d)
        if set(d.tokens) - report:
            assert len(v.set_indices) < v.dimension


def test_feature_vector_rejects_out_of_range():
    with pytest.raises(DimensionError):
        FeatureVector(dimension=3, set_indices=(0, 3))


def test_feature_vector_rejects_unsorted():
    with pytest.raises(DataError):
        FeatureVector(dimension=4, set_indices=(2, 1))


@settings(max_examples=50, deadline=None)
@given(bits=st.lists(st.booleans(), min_size=1, max_size=40))
def test_densify_sparsify_round_trip(bits):
    dense = np.array(bits, dtype=np.float64)
    v = sparsify(dense)
    np.testing.assert_array_equal(v.densify(), dense)
    assert sparsify(v.densify()) == v


def test_densify_batch_checks_dimensions():
    v = FeatureVector(dimension=3, set_indices=(1,))
    with pytest.raises(DimensionError):
        densify_batch([v], dimension=4)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def test_dictionary_file_round_trip(tmp_path):
    d = build_dictionary([{"alpha", "beta"}, {"alpha", "gamma"}, {"delta"}], cap=10)
    path = tmp_path / "dict.txt"
    write_dictionary(d, path)
    first = path.read_bytes()
    assert b"\r" not in first  # LF endings only
    loaded = read_dictionary(path)
    assert loaded.tokens == d.tokens
    write_dictionary(loaded, path)
    assert path.read_bytes() == first


def test_dictionary_index_is_line_number(tmp_path):
    path = tmp_path / "dict.txt"
    path.write_bytes(b"one\ntwo\nthree\n")
    d = read_dictionary(path)
    assert d.index_of("one") == 0 and d.index_of("three") == 2


def test_vector_file_round_trip(tmp_path):
    records = [
        VectorRecord("s1", "famA", date(2016, 3, 1), FeatureVector(5, (0, 3))),
        VectorRecord("s2", "famB", date(2017, 6, 30), FeatureVector(5, ())),
        VectorRecord("s3", "famA", date(2015, 12, 31), FeatureVector(5, (0, 1, 2, 3, 4))),
    ]
    path = tmp_path / "vectors.tsv"
    write_vector_file(records, path)
    first = path.read_bytes()
    loaded = read_vector_file(path, dimension=5)
    assert loaded == records
    write_vector_file(loaded, path)
    assert path.read_bytes() == first


def test_vector_file_empty_index_field(tmp_path):
    path = tmp_path / "v.tsv"
    path.write_text("x\tfam\t2017-01-01\t\n")
    [record] = read_vector_file(path, dimension=3)
    assert record.vector.set_indices == ()


def test_vector_file_rejects_bad_index(tmp_path):
    path = tmp_path / "v.tsv"
    path.write_text("x\tfam\t2017-01-01\t9\n")
    with pytest.raises(DataError, match="line 1"):
        read_vector_file(path, dimension=3)


def test_vector_file_rejects_bad_date(tmp_path):
    path = tmp_path / "v.tsv"
    path.write_text("x\tfam\tnot-a-date\t1\n")
    with pytest.raises(DataError, match="date"):
        read_vector_file(path, dimension=3)
