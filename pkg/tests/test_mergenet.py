import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbmsort.mergenet import (
    BLOCK_RATES,
    MAX_KEY,
    DrainedUnitError,
    MergeUnitState,
    RateError,
    Record,
    bitonic_merge_blocks,
    bitonic_merge_network,
    compare_swap,
    merger_stats,
    mms_merge_runs,
    mms_stats,
    mms_step,
)
from oracles import two_pointer_merge, random_sorted_records


def recs(*keys):
    return [Record(k) for k in keys]


def keys_of(records):
    return [r.key for r in records]


class TestCompareSwap:
    def test_swaps_out_of_order(self):
        lo, hi = compare_swap(Record(5), Record(3))
        assert (lo.key, hi.key) == (3, 5)

    def test_equal_keys_keep_input_order(self):
        a, b = Record(7, 1), Record(7, 2)
        lo, hi = compare_swap(a, b)
        assert lo is a and hi is b

    def test_extreme_keys_identity(self):
        lo, hi = compare_swap(Record(0), Record(MAX_KEY))
        assert (lo.key, hi.key) == (0, MAX_KEY)


class TestRecord:
    @pytest.mark.parametrize("key,value", [(-1, 0), (1 << 32, 0), (0, 1 << 32)])
    def test_range_checks(self, key, value):
        with pytest.raises(ValueError):
            Record(key, value)


class TestNetwork:
    @pytest.mark.parametrize("rate", BLOCK_RATES)
    def test_enumeration_matches_stats(self, rate):
        stages = bitonic_merge_network(2 * rate)
        stats = merger_stats(rate)
        assert len(stages) == stats.stages
        assert sum(len(s) for s in stages) == stats.comparators
        # every stage touches each lane at most once
        for stage in stages:
            lanes = [l for pair in stage for l in pair]
            assert len(lanes) == len(set(lanes))

    def test_known_sizes(self):
        assert merger_stats(1) == (1, 1)
        assert merger_stats(4) == (12, 3)

    def test_mms_doubles(self):
        assert mms_stats(1) == (1, 1)
        assert mms_stats(4) == (24, 6)
        assert mms_stats(16).comparators == 160

    def test_bad_width(self):
        with pytest.raises(RateError):
            bitonic_merge_network(6)
        with pytest.raises(RateError):
            merger_stats(3)


class TestBitonicMergeBlocks:
    def test_interleaved(self):
        out = bitonic_merge_blocks(recs(1, 3, 5, 7), recs(2, 4, 6, 8))
        assert keys_of(out) == [1, 2, 3, 4, 5, 6, 7, 8]

    def test_disjoint_ranges(self):
        out = bitonic_merge_blocks(recs(1, 2, 3, 4), recs(5, 6, 7, 8))
        assert keys_of(out) == list(range(1, 9))

    def test_mismatched_rate_rejected(self):
        with pytest.raises(RateError):
            bitonic_merge_blocks(recs(1, 2), recs(1, 2, 3, 4))

    def test_unsupported_rate_rejected(self):
        with pytest.raises(RateError):
            bitonic_merge_blocks(recs(1, 2, 3), recs(4, 5, 6))

    @pytest.mark.parametrize("rate", BLOCK_RATES)
    def test_matches_two_pointer_oracle(self, rate):
        rng = np.random.default_rng(rate)
        for _ in range(500):
            a = random_sorted_records(rng, rate)
            b = random_sorted_records(rng, rate)
            assert list(bitonic_merge_blocks(a, b)) == two_pointer_merge(a, b)

    def test_ties_resolve_port_a_first(self):
        a = [Record(5, 1), Record(5, 2)]
        b = [Record(5, 3), Record(5, 4)]
        out = bitonic_merge_blocks(a, b)
        assert [r.value for r in out] == [1, 2, 3, 4]

    @given(
        st.integers(0, 2),
        st.lists(st.integers(0, 7), min_size=4, max_size=4),
        st.lists(st.integers(0, 7), min_size=4, max_size=4),
    )
    @settings(max_examples=200, deadline=None)
    def test_property_oracle_equivalence_with_ties(self, _seed, ka, kb):
        a = [Record(k, i) for i, k in enumerate(sorted(ka))]
        b = [Record(k, 100 + i) for i, k in enumerate(sorted(kb))]
        assert list(bitonic_merge_blocks(a, b)) == two_pointer_merge(a, b)


class TestMmsStep:
    def test_blocked_merge_example(self):
        state = MergeUnitState(4)
        a = recs(1, 3, 5, 7) + recs(9, 11, 13, 15)
        b = recs(2, 4, 6, 8) + recs(10, 12, 14, 16)
        out, steps = mms_merge_runs(a, b, 4)
        blocks = [keys_of(out[i : i + 4]) for i in range(0, 16, 4)]
        assert blocks == [[1, 2, 3, 4], [5, 6, 7, 8], [9, 10, 11, 12], [13, 14, 15, 16]]
        assert steps == 4  # two blocks per run, one step each, flush included

    def test_one_sided_with_retained(self):
        state = MergeUnitState(4)
        # prime the unit so that [1,2,3,4] is retained
        out, consumed = mms_step(state, recs(1, 2, 3, 4), recs(5, 6, 7, 8))
        assert consumed == "both"
        assert keys_of(out) == [1, 2, 3, 4]
        assert keys_of(state.retained) == [5, 6, 7, 8]
        # A exhausted: consuming B merges against the retained half
        out, consumed = mms_step(state, None, recs(5, 6, 7, 8))
        assert consumed == "B"
        assert keys_of(out) == [5, 5, 6, 6]

    def test_degenerate_one_sided_merge(self):
        # retained [1,2,3,4], A exhausted, B=[5,6,7,8] -> out [1,2,3,4]
        state = MergeUnitState(4)
        mms_step(state, recs(0, 0, 0, 0), recs(1, 2, 3, 4))
        assert keys_of(state.retained) == [1, 2, 3, 4]
        out, consumed = mms_step(state, None, recs(5, 6, 7, 8))
        assert consumed == "B"
        assert keys_of(out) == [1, 2, 3, 4]

    def test_selection_prefers_smaller_head(self):
        state = MergeUnitState(2)
        mms_step(state, recs(1, 10), recs(2, 11))
        out, consumed = mms_step(state, recs(20, 21), recs(3, 4))
        assert consumed == "B"

    def test_flush_and_drained_error(self):
        state = MergeUnitState(2)
        mms_step(state, recs(1, 2), recs(3, 4))
        out, consumed = mms_step(state, None, None)
        assert consumed == "flush"
        assert keys_of(out) == [3, 4]
        with pytest.raises(DrainedUnitError):
            mms_step(state, None, None)

    def test_run_epoch_reset(self):
        state = MergeUnitState(2)
        mms_step(state, recs(1, 2), recs(3, 4))
        state.reset()
        assert state.run_epoch == 1
        assert state.drained
        assert state.reset_cycles == state.pipeline_depth

    @pytest.mark.parametrize("rate", [2, 4, 8])
    def test_run_level_oracle(self, rate):
        rng = np.random.default_rng(17 + rate)
        for _ in range(200):
            a = random_sorted_records(rng, rate * int(rng.integers(0, 5)), key_range=64)
            b = random_sorted_records(rng, rate * int(rng.integers(0, 5)), key_range=64)
            out, _ = mms_merge_runs(a, b, rate)
            assert out == two_pointer_merge(a, b)

    def test_initiation_interval_is_one(self):
        # merging m + n blocks takes exactly m + n invocations, flush included
        rng = np.random.default_rng(23)
        for m, n in [(1, 1), (3, 2), (5, 5), (0, 4), (6, 0)]:
            a = random_sorted_records(rng, 4 * m)
            b = random_sorted_records(rng, 4 * n)
            out, steps = mms_merge_runs(a, b, 4)
            assert steps == m + n
            assert len(out) == 4 * (m + n)

    def test_partial_tail_blocks(self):
        rng = np.random.default_rng(5)
        a = random_sorted_records(rng, 11)
        b = random_sorted_records(rng, 6)
        out, _ = mms_merge_runs(a, b, 4)
        assert out == two_pointer_merge(a, b)

    def test_max_key_records_survive_padding(self):
        a = [Record(7), Record(MAX_KEY, 1)]
        b = [Record(MAX_KEY, 2)]
        out, _ = mms_merge_runs(a, b, 2)
        assert [(r.key, r.value) for r in out] == [(7, 0), (MAX_KEY, 1), (MAX_KEY, 2)]


class TestMultisetPreservation:
    @given(
        st.integers(1, 3),
        st.lists(st.integers(0, MAX_KEY), min_size=0, max_size=20),
        st.lists(st.integers(0, MAX_KEY), min_size=0, max_size=20),
    )
    @settings(max_examples=150, deadline=None)
    def test_mms_output_is_permutation_of_inputs(self, rate_exp, ka, kb):
        rate = 1 << rate_exp
        a = [Record(k, i) for i, k in enumerate(sorted(ka))]
        b = [Record(k, 1000 + i) for i, k in enumerate(sorted(kb))]
        out, _ = mms_merge_runs(a, b, rate)
        assert sorted((r.key, r.value) for r in out) == sorted(
            (r.key, r.value) for r in a + b
        )
