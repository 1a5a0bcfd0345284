"""Hypothesis strategies shared across test modules."""
import numpy as np
from hypothesis import strategies as st

from flowopt.features import N_FEATURES, FeatureMask
from flowopt.ingest import ACK, SYN, TCP, UDP, FlowRecord


@st.composite
def flows(draw, max_len=30):
    n = draw(st.integers(1, max_len))
    proto = draw(st.sampled_from([TCP, UDP]))
    dirs = [0] + draw(st.lists(st.integers(0, 1), min_size=n - 1, max_size=n - 1))
    gaps = draw(st.lists(st.integers(0, 50_000), min_size=n - 1, max_size=n - 1))
    ts = np.concatenate([[0], np.cumsum(gaps)]).astype(int) + draw(st.integers(0, 10**6))
    sizes = draw(st.lists(st.integers(40, 1514), min_size=n, max_size=n))
    ttl = draw(st.lists(st.integers(0, 255), min_size=n, max_size=n))
    if proto == TCP:
        flags = draw(st.lists(st.integers(0, 255), min_size=n, max_size=n))
        if draw(st.booleans()) and n >= 3:
            dirs[:3] = [0, 1, 0]
            flags[:3] = [SYN, SYN | ACK, ACK]
        win = draw(st.lists(st.integers(0, 65535), min_size=n, max_size=n))
    else:
        flags, win = [0] * n, [0] * n
    return FlowRecord.from_columns(
        "h", None, ts=ts, dir=dirs, frame_len=sizes, proto=[proto] * n,
        src_port=[1111 if d == 0 else 2222 for d in dirs], dst_port=[2222 if d == 0 else 1111 for d in dirs],
        ip_ttl=ttl, tcp_flags=flags, tcp_window=win,
    )


masks = st.integers(1, (1 << N_FEATURES) - 1).map(FeatureMask)
depths = st.one_of(st.integers(1, 40), st.none())
