"""Window feature tests: indexing, entropy, ratios, aggregation invariants."""


import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ualab.flow import FlowWindowStats, T_COLUMNS
from ualab.windows import (
    GL_COLUMNS,
    MixedWindows,
    NegativeOffset,
    aggregate,
    safe_ratio,
    shannon_entropy,
    window_index,
    window_index_us,
)


class TestWindowIndex:
    def test_plain_floor(self):
        assert window_index(12.3, 0.0, 5.0) == 2

    def test_boundary_belongs_to_next_window(self):
        assert window_index(5.0, 0.0, 5.0) == 1

    def test_origin_is_window_zero(self):
        assert window_index(0.0, 0.0, 5.0) == 0

    def test_negative_offset_rejected(self):
        with pytest.raises(NegativeOffset):
            window_index(1.0, 2.0)

    def test_microsecond_variant_agrees_with_float(self):
        for ts_us in (0, 1, 4_999_999, 5_000_000, 12_300_000, 3_600_000_001):
            assert window_index_us(ts_us, 0) == window_index(ts_us / 1e6, 0.0)

    @given(st.integers(0, 10**13), st.integers(0, 10**7))
    def test_us_variant_floor_property(self, off, origin):
        assert window_index_us(origin + off, origin) == off // 5_000_000


class TestEntropy:
    def test_uniform_four_classes_is_two_bits(self):
        assert shannon_entropy({"A": 1, "B": 1, "C": 1, "D": 1}) == 2.0

    def test_single_class_is_zero(self):
        for k in (1, 5, 1000):
            assert shannon_entropy({"A": k}) == 0.0

    def test_three_one_split(self):
        # hand-derived: -(0.75*log2(0.75) + 0.25*log2(0.25)) = 0.811278...
        assert shannon_entropy({"A": 3, "B": 1}) == pytest.approx(0.8113, abs=1e-4)

    def test_empty_and_zero_counts(self):
        assert shannon_entropy({}) == 0.0
        assert shannon_entropy({"A": 0, "B": 0}) == 0.0

    def test_label_permutation_invariance(self):
        assert shannon_entropy({"A": 3, "B": 7, "C": 2}) == pytest.approx(
            shannon_entropy({"C": 3, "A": 7, "B": 2})
        )

    @given(st.dictionaries(st.text(min_size=1, max_size=4), st.integers(0, 50), max_size=8))
    def test_entropy_bounds(self, counts):
        h = shannon_entropy(counts)
        nonzero = sum(1 for c in counts.values() if c > 0)
        assert 0.0 <= h <= (math.log2(nonzero) + 1e-12 if nonzero else 0.0)


class TestSafeRatio:
    def test_zero_over_zero(self):
        assert safe_ratio(0, 0) == 0

    def test_positive_over_zero_policy(self):
        assert safe_ratio(5, 0) == 0

    def test_plain_division(self):
        assert safe_ratio(3, 4) == 0.75


def make_stats(window_id=0, flow_id="f0", **overrides):
    s = FlowWindowStats(flow_id=flow_id, window_id=window_id)
    for k, v in overrides.items():
        setattr(s, k, v)
    return s


class TestAggregate:
    def test_two_flow_example(self):
        a = make_stats(flow_id="a", t_pkt_count=10, t_pkt_size_sum=1000)
        b = make_stats(flow_id="b", t_pkt_count=30, t_pkt_size_sum=5000)
        vec = aggregate([a, b])
        assert vec.t_pkt_count == 40
        assert vec.gl_mean_pkt_size == pytest.approx(150.0)
        assert vec.gl_max_flow_pkt_ratio == pytest.approx(0.75)
        assert vec.gl_flow_count == 2

    def test_service_entropy_from_request_mix(self):
        a = make_stats(flow_id="a", t_service_req_count=4, service_req_kinds={"Read": 3, "Publish": 1})
        vec = aggregate([a])
        assert vec.gl_service_entropy == pytest.approx(0.8113, abs=1e-4)

    def test_publish_only_window(self):
        a = make_stats(
            flow_id="a",
            t_service_req_count=5,
            t_publish_req=5,
            service_req_kinds={"Publish": 5},
        )
        vec = aggregate([a])
        assert vec.gl_publish_ratio == 1.0
        assert vec.gl_service_entropy == 0.0

    def test_empty_window_is_zero_vector(self):
        vec = aggregate([], window_id=3, window_start=15.0)
        assert vec.window_id == 3
        assert all(vec.values[c] == 0 for c in T_COLUMNS)
        assert all(vec.values[c] == 0.0 for c in GL_COLUMNS)

    def test_mixed_windows_rejected(self):
        with pytest.raises(MixedWindows):
            aggregate([make_stats(window_id=0), make_stats(window_id=1)])

    def test_req_res_ratio_keeps_asymmetry_signal(self):
        a = make_stats(t_service_req_count=50, t_service_res_count=0)
        assert aggregate([a]).gl_req_res_ratio == 50.0

    def test_churn_sums(self):
        a = make_stats(
            t_open_sec_ch_req=3,
            t_close_sec_ch_req=2,
            t_create_session_req=1,
            t_activate_session_req=1,
            t_close_session_req=1,
            t_create_sub_req=4,
            t_del_sub_req=1,
        )
        vec = aggregate([a])
        assert vec.gl_sec_ch_churn == 5
        assert vec.gl_session_churn == 3
        assert vec.gl_sub_churn == 5

    def test_std_zero_for_equal_request_counts(self):
        flows = [make_stats(flow_id=f"f{i}", t_service_req_count=7) for i in range(4)]
        assert aggregate(flows).gl_std_flow_req_count == 0.0

    def test_dominance_lower_bound(self):
        flows = [make_stats(flow_id=f"f{i}", t_pkt_count=5) for i in range(8)]
        vec = aggregate(flows)
        assert vec.gl_max_flow_pkt_ratio >= 1 / vec.gl_flow_count


def random_flow_stats(draw, window_id, flow_id):
    ints = st.integers(0, 200)
    pkt = draw(ints)
    fwd = draw(st.integers(0, pkt))
    size = draw(st.integers(0, 200_000))
    fwd_size = draw(st.integers(0, size))
    body_count = draw(st.integers(0, pkt + 5))
    req = draw(ints)
    res = draw(ints)
    reads = draw(st.integers(0, req)) if req else 0
    publishes = draw(st.integers(0, req - reads)) if req - reads else 0
    kinds = {}
    if reads:
        kinds["Read"] = reads
    if publishes:
        kinds["Publish"] = publishes
    other = req - reads - publishes
    if other:
        kinds["Other"] = other
    return make_stats(
        window_id=window_id,
        flow_id=flow_id,
        t_pkt_count=pkt,
        t_fwd_pkt_count=fwd,
        t_bwd_pkt_count=pkt - fwd,
        t_pkt_size_sum=size,
        t_fwd_pkt_size_sum=fwd_size,
        t_bwd_pkt_size_sum=size - fwd_size,
        t_body_count=body_count,
        t_body_length_sum=draw(st.integers(0, size)),
        t_iat_sum=draw(st.floats(0, 5, allow_nan=False)),
        t_iat_count=max(pkt - 1, 0),
        t_active_flow_drt=draw(st.floats(0, 5, allow_nan=False)),
        t_service_req_count=req,
        t_service_res_count=res,
        t_read_req=reads,
        t_publish_req=publishes,
        t_server_res_time_sum=draw(st.floats(0, 2, allow_nan=False)),
        t_server_res_time_count=draw(st.integers(0, min(req, res) if min(req, res) else 0)),
        service_req_kinds=kinds,
    )


@st.composite
def stat_lists(draw):
    n = draw(st.integers(1, 6))
    return [random_flow_stats(draw, 0, f"f{i}") for i in range(n)]


class TestAggregateProperties:
    @settings(max_examples=120, deadline=None)
    @given(stat_lists())
    def test_duplication_invariance(self, stats):
        """Duplicating every flow leaves ratio/mean/entropy features unchanged
        and doubles flow count and all summed counters."""
        doubled = stats + [
            make_stats(
                window_id=0,
                flow_id=f"{s.flow_id}-copy",
                **{c: getattr(s, c) for c in T_COLUMNS},
                service_req_kinds=dict(s.service_req_kinds),
            )
            for s in stats
        ]
        base = aggregate(stats)
        dup = aggregate(doubled)
        assert dup.gl_flow_count == 2 * base.gl_flow_count
        for col in T_COLUMNS:
            assert dup.values[col] == pytest.approx(2 * base.values[col])
        unchanged = [
            "gl_mean_pkt_size",
            "gl_mean_body_len",
            "gl_body_pkt_ratio",
            "gl_body_byte_ratio",
            "gl_fwd_pkt_ratio",
            "gl_fwd_byte_ratio",
            "gl_mean_iat",
            "gl_mean_flow_drt",
            "gl_max_flow_drt",
            "gl_mean_server_res_time",
            "gl_req_per_flow",
            "gl_read_ratio",
            "gl_write_ratio",
            "gl_publish_ratio",
            "gl_monitored_item_rate",
            "gl_service_entropy",
        ]
        for col in unchanged:
            assert dup.values[col] == pytest.approx(base.values[col], rel=1e-12, abs=1e-12), col

    @settings(max_examples=120, deadline=None)
    @given(stat_lists())
    def test_fraction_features_bounded(self, stats):
        vec = aggregate(stats)
        for col in GL_COLUMNS:
            if col.endswith("_ratio") and col != "gl_req_res_ratio":
                assert 0.0 <= vec.values[col] <= 1.0, col
        nonzero_kinds = len(
            {k for s in stats for k, v in s.service_req_kinds.items() if v > 0}
        )
        if nonzero_kinds:
            assert vec.gl_service_entropy <= math.log2(nonzero_kinds) + 1e-12
