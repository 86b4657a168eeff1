import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sharpsearch.space import (
    CardinalityError,
    Configuration,
    HyperparameterSpec,
    SearchSpace,
    SpaceError,
    SpaceParseError,
    parse_space,
)


def test_cardinality_of_shipped_spaces(table1, table3):
    assert table1.cardinality() == 256
    assert table3.cardinality() == 398_131_200


def test_cardinality_single_option():
    assert SearchSpace([HyperparameterSpec.numeric("a", [4])]).cardinality() == 1


def test_cardinality_overflow_is_explicit():
    specs = [HyperparameterSpec.numeric(f"h{i}", range(1000)) for i in range(8)]
    with pytest.raises(OverflowError):
        SearchSpace(specs).cardinality()


def test_table1_transcription(table1):
    expected = {
        "lr": (0.0001, 1.0),
        "decay": (1e-8, 1e-6),
        "sh_st": (15.0, 25.0),
        "sh_du": (3.0, 7.0),
        "sh_int": (2.0, 5.0),
        "filter1": (3.0, 7.0),
        "feat1": (64.0, 128.0),
        "dense": (256.0, 1024.0),
    }
    assert {s.name: s.options for s in table1} == expected


def test_table3_option_counts(table3):
    counts = [s.size for s in table3]
    assert counts == [5, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 3, 4, 5, 3, 2, 2, 3, 3, 2, 3]
    assert table3["optimizer"].options == ("adadelta", "rmsprop")
    assert table3["bn_center"].options == ("false", "true")


class TestSpecValidation:
    def test_empty(self):
        with pytest.raises(SpaceError):
            HyperparameterSpec.categorical("a", [])

    def test_duplicate_categorical(self):
        with pytest.raises(SpaceError):
            HyperparameterSpec.categorical("a", ["x", "x"])

    def test_numeric_not_increasing(self):
        with pytest.raises(SpaceError):
            HyperparameterSpec.numeric("a", [1, 1])
        with pytest.raises(SpaceError):
            HyperparameterSpec.numeric("a", [2, 1])

    def test_duplicate_names(self):
        a = HyperparameterSpec.numeric("a", [1])
        with pytest.raises(SpaceError):
            SearchSpace([a, a])


class TestEnumerate:
    def test_table1_all_distinct(self, table1):
        configs = list(table1.enumerate(1000))
        assert len(configs) == 256
        assert len(set(configs)) == 256

    def test_lexicographic_order(self):
        space = parse_space("a numeric 1, 2\nb categorical x, y, z\n")
        got = [(c["a"], c["b"]) for c in space.enumerate(10)]
        assert got == list(itertools.product([1.0, 2.0], ["x", "y", "z"]))

    def test_single_spec(self):
        space = SearchSpace([HyperparameterSpec.numeric("v", [3, 7])])
        assert [c["v"] for c in space.enumerate(10)] == [3.0, 7.0]

    def test_refuses_large_space(self, table3):
        with pytest.raises(CardinalityError) as err:
            table3.enumerate(10**6)
        assert "398131200" in str(err.value)
        assert err.value.cardinality == 398131200

    def test_index_enumeration_matches(self, table1):
        idx = table1.enumerate_indices(256)
        assert [table1.from_indices(r) for r in idx] == list(table1.enumerate(256))


class TestSampling:
    def test_deterministic(self, table1):
        a = [table1.sample_uniform(np.random.default_rng(7)) for _ in range(2)]
        b = [table1.sample_uniform(np.random.default_rng(7)) for _ in range(2)]
        assert a == b
        assert all(table1.contains(c) for c in a)

    def test_forced(self):
        space = parse_space("a numeric 1\nb categorical only\n")
        assert space.sample_uniform(np.random.default_rng(0)) == space.config(a=1, b="only")

    def test_two_option_frequency(self):
        # 10^4 fair coin flips: P(|freq - 0.5| > 0.05) < 1e-6 by a Chernoff bound
        space = parse_space("a categorical p, q\n")
        rng = np.random.default_rng(12345)
        draws = [space.sample_uniform(rng)["a"] for _ in range(10_000)]
        freq = draws.count("p") / len(draws)
        assert 0.45 <= freq <= 0.55


class TestEncoding:
    def test_numeric_rank(self):
        space = SearchSpace([HyperparameterSpec.numeric("v", [3, 5, 7])])
        np.testing.assert_array_equal(space.encode(space.config(v=5)), [0.5])

    def test_single_option_is_zero(self):
        space = SearchSpace([HyperparameterSpec.numeric("v", [3])])
        np.testing.assert_array_equal(space.encode(space.config(v=3)), [0.0])

    def test_one_hot(self):
        space = SearchSpace([HyperparameterSpec.categorical("opt", ["Adadelta", "RMSprop"])])
        np.testing.assert_array_equal(space.encode(space.config(opt="RMSprop")), [0.0, 1.0])

    def test_roundtrip_table1(self, table1):
        for cfg in table1.enumerate(256):
            assert table1.decode(table1.encode(cfg)) == cfg

    def test_dimension(self, table3):
        assert table3.dim == 18 + 2 * 4
        x = table3.encode(table3.sample_uniform(np.random.default_rng(0)))
        assert x.shape == (26,)

    def test_decode_errors(self, table1):
        with pytest.raises(SpaceError):
            table1.decode(np.zeros(7))
        with pytest.raises(SpaceError):
            table1.decode(np.full(8, 1.1))
        table1.decode(np.full(8, 1 + 1e-10))


@st.composite
def spaces(draw):
    n = draw(st.integers(1, 4))
    specs = []
    for i in range(n):
        k = draw(st.integers(1, 4))
        if draw(st.booleans()):
            vals = sorted(draw(st.sets(st.floats(-1e3, 1e3, allow_nan=False), min_size=k, max_size=k)))
            specs.append(HyperparameterSpec.numeric(f"n{i}", vals))
        else:
            specs.append(HyperparameterSpec.categorical(f"c{i}", [f"o{j}" for j in range(k)]))
    return SearchSpace(specs)


@settings(max_examples=60, deadline=None)
@given(spaces())
def test_enumeration_properties(space):
    configs = list(space.enumerate(10**4))
    assert len(configs) == space.cardinality()
    assert len(set(configs)) == len(configs)
    for c in configs:
        x = space.encode(c)
        assert x.shape == (space.dim,)
        assert np.all((0 <= x) & (x <= 1))
        assert space.decode(x) == c


@settings(max_examples=40, deadline=None)
@given(spaces(), st.integers(0, 2**32 - 1))
def test_sampling_reproducible(space, seed):
    a = space.sample_uniform(np.random.default_rng(seed))
    b = space.sample_uniform(np.random.default_rng(seed))
    assert a == b and space.contains(a)


class TestParsing:
    def test_line_numbers(self):
        with pytest.raises(SpaceParseError) as err:
            parse_space("a numeric 1, 2\n\nb bogus x\n", source="f.space")
        assert err.value.lineno == 3
        assert "f.space:3" in str(err.value)

    def test_missing_options(self):
        with pytest.raises(SpaceParseError) as err:
            parse_space("# header\na numeric\n")
        assert err.value.lineno == 2

    def test_text_roundtrip(self, table3):
        assert parse_space(table3.to_text()) == table3


class TestConfiguration:
    def test_pairs_roundtrip(self, table3):
        rng = np.random.default_rng(3)
        for _ in range(50):
            c = table3.sample_uniform(rng)
            assert table3.parse_pairs(c.to_pairs()) == c

    def test_case_insensitive_categorical(self, table3):
        c = table3.sample_uniform(np.random.default_rng(0))
        d = dict(c, optimizer="RMSProp")
        assert table3.config(d)["optimizer"] == "rmsprop"

    def test_rejects_non_member(self, table1):
        c = dict(table1.sample_uniform(np.random.default_rng(0)))
        c["lr"] = 0.5
        with pytest.raises(SpaceError):
            table1.config(c)
        assert not table1.contains(c)

    def test_hashable_mapping(self):
        a = Configuration(["x", "y"], [1, "b"])
        assert {a: 1}[Configuration(["x", "y"], [1, "b"])] == 1
        assert dict(a) == {"x": 1, "y": "b"}
