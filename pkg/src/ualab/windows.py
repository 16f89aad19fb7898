"""Fixed-window aggregation of flow statistics into one feature vector.

Windows are 5 s, non-overlapping, left-closed right-open, with the origin
at the capture's first packet. The aggregate keeps every per-flow counter
as a plain sum and derives the cross-flow features from those sums; each
formula is a single line below so alternates can be swapped per feature.

Zero-denominator policy: fraction-type features fall back to 0 via
`safe_ratio`; the request/response ratio instead clamps its denominator to
1 so an all-request window keeps its asymmetry signal.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

from .flow import T_COLUMNS, FlowWindowStats

DEFAULT_WINDOW_S = 5.0


class WindowError(Exception):
    pass


class NegativeOffset(WindowError):
    pass


class MixedWindows(WindowError):
    pass


def window_index(ts: float, origin: float, width: float = DEFAULT_WINDOW_S) -> int:
    """Index of the window containing `ts`; intervals are [k*w, (k+1)*w)."""
    if width <= 0:
        raise WindowError(f"width must be positive, got {width}")
    if ts < origin:
        raise NegativeOffset(f"ts {ts} precedes origin {origin}")
    return int(math.floor((ts - origin) / width))


def window_index_us(ts_us: int, origin_us: int, width_us: int = 5_000_000) -> int:
    """Exact integer variant used by the pipeline (microsecond timestamps)."""
    if width_us <= 0:
        raise WindowError(f"width must be positive, got {width_us}")
    if ts_us < origin_us:
        raise NegativeOffset(f"ts {ts_us} precedes origin {origin_us}")
    return (ts_us - origin_us) // width_us


def safe_ratio(numerator: float, denominator: float) -> float:
    """numerator/denominator, or 0 when the denominator is not positive."""
    return numerator / denominator if denominator > 0 else 0.0


def shannon_entropy(counts: dict[str, int]) -> float:
    """Shannon entropy in bits of a count distribution; empty input is 0."""
    total = sum(c for c in counts.values() if c > 0)
    if total <= 0:
        return 0.0
    h = 0.0
    for c in counts.values():
        if c > 0:
            p = c / total
            h -= p * math.log2(p)
    return h


GL_COLUMNS: tuple[str, ...] = (
    "gl_mean_pkt_size",
    "gl_mean_body_len",
    "gl_body_pkt_ratio",
    "gl_body_byte_ratio",
    "gl_fwd_pkt_ratio",
    "gl_fwd_byte_ratio",
    "gl_mean_iat",
    "gl_mean_flow_drt",
    "gl_max_flow_drt",
    "gl_req_res_ratio",
    "gl_mean_server_res_time",
    "gl_req_per_flow",
    "gl_read_ratio",
    "gl_write_ratio",
    "gl_publish_ratio",
    "gl_monitored_item_rate",
    "gl_flow_count",
    "gl_sec_ch_churn",
    "gl_session_churn",
    "gl_sub_churn",
    "gl_max_flow_pkt_ratio",
    "gl_max_flow_req_ratio",
    "gl_max_flow_publish_ratio",
    "gl_std_flow_req_count",
    "gl_std_flow_publish_count",
    "gl_service_entropy",
)


@dataclass
class WindowFeatureVector:
    """One dataset row: summed per-flow counters plus cross-flow features."""

    window_id: int
    window_start: float
    values: dict[str, float]

    def __getattr__(self, name: str):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None


def zero_vector(window_id: int, window_start: float) -> WindowFeatureVector:
    values = {c: 0 for c in T_COLUMNS}
    values.update({c: 0.0 for c in GL_COLUMNS})
    return WindowFeatureVector(window_id=window_id, window_start=window_start, values=values)


def aggregate(
    stats: list[FlowWindowStats],
    window_id: int | None = None,
    window_start: float = 0.0,
) -> WindowFeatureVector:
    """Aggregate one window's per-flow stats into the full feature vector."""
    if not stats:
        if window_id is None:
            raise WindowError("empty window needs an explicit window_id")
        return zero_vector(window_id, window_start)
    wids = {s.window_id for s in stats}
    if len(wids) > 1:
        raise MixedWindows(f"stats span windows {sorted(wids)}")
    wid = wids.pop()
    if window_id is not None and window_id != wid:
        raise MixedWindows(f"stats belong to window {wid}, not {window_id}")

    values: dict[str, float] = {}
    for col in T_COLUMNS:
        values[col] = sum(getattr(s, col) for s in stats)

    n_flows = len(stats)
    pkt_total = values["t_pkt_count"]
    byte_total = values["t_pkt_size_sum"]
    req_total = values["t_service_req_count"]
    res_total = values["t_service_res_count"]
    # frame-bearing packets approximated by frame count capped at the
    # flow's packet count; keeps the fraction in [0, 1]
    bearing = sum(min(s.t_body_count, s.t_pkt_count) for s in stats)

    values["gl_mean_pkt_size"] = safe_ratio(byte_total, pkt_total)
    values["gl_mean_body_len"] = safe_ratio(values["t_body_length_sum"], values["t_body_count"])
    values["gl_body_pkt_ratio"] = safe_ratio(bearing, pkt_total)
    values["gl_body_byte_ratio"] = min(1.0, safe_ratio(values["t_body_length_sum"], byte_total))
    values["gl_fwd_pkt_ratio"] = safe_ratio(values["t_fwd_pkt_count"], pkt_total)
    values["gl_fwd_byte_ratio"] = safe_ratio(values["t_fwd_pkt_size_sum"], byte_total)
    values["gl_mean_iat"] = safe_ratio(values["t_iat_sum"], values["t_iat_count"])
    values["gl_mean_flow_drt"] = safe_ratio(values["t_active_flow_drt"], n_flows)
    values["gl_max_flow_drt"] = max(s.t_active_flow_drt for s in stats)
    values["gl_req_res_ratio"] = req_total / max(res_total, 1)
    values["gl_mean_server_res_time"] = safe_ratio(
        values["t_server_res_time_sum"], values["t_server_res_time_count"]
    )
    values["gl_req_per_flow"] = safe_ratio(req_total, n_flows)
    values["gl_read_ratio"] = safe_ratio(values["t_read_req"], req_total)
    values["gl_write_ratio"] = safe_ratio(values["t_write_req"], req_total)
    values["gl_publish_ratio"] = safe_ratio(values["t_publish_req"], req_total)
    values["gl_monitored_item_rate"] = safe_ratio(values["t_create_mnt_itm_req"], n_flows)
    values["gl_flow_count"] = n_flows
    values["gl_sec_ch_churn"] = values["t_open_sec_ch_req"] + values["t_close_sec_ch_req"]
    values["gl_session_churn"] = (
        values["t_create_session_req"]
        + values["t_activate_session_req"]
        + values["t_close_session_req"]
    )
    values["gl_sub_churn"] = values["t_create_sub_req"] + values["t_del_sub_req"]
    values["gl_max_flow_pkt_ratio"] = max(safe_ratio(s.t_pkt_count, pkt_total) for s in stats)
    values["gl_max_flow_req_ratio"] = max(
        safe_ratio(s.t_service_req_count, req_total) for s in stats
    )
    values["gl_max_flow_publish_ratio"] = max(
        safe_ratio(s.t_publish_req, values["t_publish_req"]) for s in stats
    )
    values["gl_std_flow_req_count"] = statistics.pstdev(s.t_service_req_count for s in stats)
    values["gl_std_flow_publish_count"] = statistics.pstdev(s.t_publish_req for s in stats)

    kind_counts: dict[str, int] = {}
    for s in stats:
        for name, count in s.service_req_kinds.items():
            kind_counts[name] = kind_counts.get(name, 0) + count
    values["gl_service_entropy"] = shannon_entropy(kind_counts)

    return WindowFeatureVector(window_id=wid, window_start=window_start, values=values)


FEATURE_COLUMNS: tuple[str, ...] = T_COLUMNS + GL_COLUMNS
