"""The 67 candidate flow features and the per-packet steps each one needs."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

# Per-packet steps. Values index the step-enable vector handed to the kernel,
# and the numbering is a valid topological order (dependencies come first).
READ_TS = 0
READ_DIR = 1
READ_LEN = 2
PARSE_ETH = 3
PARSE_IP = 4
PARSE_L4 = 5
SPAN = 6            # first/last timestamp of the window
META_PROTO = 7      # protocol of the first packet
META_PORTS = 8      # ports of the first packet
HANDSHAKE = 9
CNT = 10            # packet count, +dir
BYTES_SUM = 12
BYTES_MIN = 14
BYTES_MAX = 16
BYTES_BUF = 18
IAT_LAST = 20
IAT_CNT = 22
IAT_SUM = 24
IAT_MIN = 26
IAT_MAX = 28
IAT_BUF = 30
WIN_SUM = 32
WIN_MIN = 34
WIN_MAX = 36
WIN_BUF = 38
TTL_SUM = 40
TTL_MIN = 42
TTL_MAX = 44
TTL_BUF = 46
FLAG_CNT = 48       # +bit index 0..7 (CWR..FIN order of the registry)
N_STEPS = 56

_DIRECTIONAL = {
    CNT: "cnt", BYTES_SUM: "bytes_sum", BYTES_MIN: "bytes_min", BYTES_MAX: "bytes_max", BYTES_BUF: "bytes_buf",
    IAT_LAST: "iat_last", IAT_CNT: "iat_cnt", IAT_SUM: "iat_sum", IAT_MIN: "iat_min", IAT_MAX: "iat_max",
    IAT_BUF: "iat_buf", WIN_SUM: "win_sum", WIN_MIN: "win_min", WIN_MAX: "win_max", WIN_BUF: "win_buf",
    TTL_SUM: "ttl_sum", TTL_MIN: "ttl_min", TTL_MAX: "ttl_max", TTL_BUF: "ttl_buf",
}
FLAG_NAMES = ("cwr", "ece", "urg", "ack", "psh", "rst", "syn", "fin")
FLAG_BITS = (0x80, 0x40, 0x20, 0x10, 0x08, 0x04, 0x02, 0x01)


def _step_names() -> list[str]:
    names = ["read_ts", "read_dir", "read_len", "parse_eth", "parse_ip", "parse_l4",
             "span", "meta_proto", "meta_ports", "handshake"]
    for base, name in sorted(_DIRECTIONAL.items()):
        names += [f"{name}_fwd", f"{name}_bwd"]
    names += [f"flag_{f}" for f in FLAG_NAMES]
    return names


STEP_NAMES: tuple[str, ...] = tuple(_step_names())
assert len(STEP_NAMES) == N_STEPS

# Direct prerequisites of each step; directional accumulators depend on the
# same-direction accumulators where noted.
STEP_PARENTS: dict[int, tuple[int, ...]] = {
    READ_TS: (), READ_DIR: (), READ_LEN: (), PARSE_ETH: (),
    PARSE_IP: (PARSE_ETH,), PARSE_L4: (PARSE_IP,),
    SPAN: (READ_TS,), META_PROTO: (PARSE_IP,), META_PORTS: (PARSE_L4,),
    HANDSHAKE: (READ_TS, READ_DIR, PARSE_L4),
}
for _d in (0, 1):
    STEP_PARENTS.update({
        CNT + _d: (READ_DIR,),
        BYTES_SUM + _d: (READ_DIR, READ_LEN), BYTES_MIN + _d: (READ_DIR, READ_LEN),
        BYTES_MAX + _d: (READ_DIR, READ_LEN), BYTES_BUF + _d: (READ_DIR, READ_LEN),
        IAT_LAST + _d: (READ_TS, READ_DIR),
        IAT_CNT + _d: (IAT_LAST + _d,), IAT_SUM + _d: (IAT_LAST + _d,), IAT_MIN + _d: (IAT_LAST + _d,),
        IAT_MAX + _d: (IAT_LAST + _d,), IAT_BUF + _d: (IAT_LAST + _d,),
        WIN_SUM + _d: (READ_DIR, PARSE_L4), WIN_MIN + _d: (READ_DIR, PARSE_L4),
        WIN_MAX + _d: (READ_DIR, PARSE_L4), WIN_BUF + _d: (READ_DIR, PARSE_L4),
        TTL_SUM + _d: (READ_DIR, PARSE_IP), TTL_MIN + _d: (READ_DIR, PARSE_IP),
        TTL_MAX + _d: (READ_DIR, PARSE_IP), TTL_BUF + _d: (READ_DIR, PARSE_IP),
    })
for _b in range(8):
    STEP_PARENTS[FLAG_CNT + _b] = (PARSE_L4,)
assert sorted(STEP_PARENTS) == list(range(N_STEPS))
assert all(p < s for s, ps in STEP_PARENTS.items() for p in ps)


def step_closure(steps) -> frozenset[int]:
    out: set[int] = set()
    stack = list(steps)
    while stack:
        s = stack.pop()
        if s not in out:
            out.add(s)
            stack.extend(STEP_PARENTS[s])
    return frozenset(out)


@dataclass(frozen=True)
class FeatureSpec:
    id: int
    name: str
    description: str
    direction: str          # "originator" | "responder" | "both"
    step_deps: frozenset[int]


def _build() -> tuple[FeatureSpec, ...]:
    rows: list[tuple[str, str, str, tuple[int, ...]]] = [
        ("dur", "total duration", "both", (SPAN,)),
        ("proto", "transport layer protocol", "both", (META_PROTO,)),
        ("s_port", "src port", "originator", (META_PORTS,)),
        ("d_port", "dst port", "responder", (META_PORTS,)),
        ("s_load", "src -> dst bps", "originator", (BYTES_SUM, SPAN)),
        ("d_load", "dst -> src bps", "responder", (BYTES_SUM + 1, SPAN)),
        ("s_pkt_cnt", "src -> dst packet count", "originator", (CNT,)),
        ("d_pkt_cnt", "dst -> src packet count", "responder", (CNT + 1,)),
        ("tcp_rtt", "time between SYN and ACK", "both", (HANDSHAKE,)),
        ("syn_ack", "time between SYN and SYN/ACK", "both", (HANDSHAKE,)),
        ("ack_dat", "time between SYN/ACK and ACK", "both", (HANDSHAKE,)),
    ]
    families = [
        ("bytes", "packet size", BYTES_SUM, BYTES_MIN, BYTES_MAX, BYTES_BUF, CNT),
        ("iat", "packet inter-arrival time", IAT_SUM, IAT_MIN, IAT_MAX, IAT_BUF, IAT_CNT),
        ("winsize", "TCP window size", WIN_SUM, WIN_MIN, WIN_MAX, WIN_BUF, CNT),
        ("ttl", "IP TTL", TTL_SUM, TTL_MIN, TTL_MAX, TTL_BUF, CNT),
    ]
    for fam, what, s_sum, s_min, s_max, s_buf, s_cnt in families:
        for stat, desc, deps in (
            ("sum", "total", (s_sum,)), ("mean", "mean", (s_sum, s_cnt)), ("min", "min", (s_min,)),
            ("max", "max", (s_max,)), ("med", "median", (s_buf,)), ("std", "std dev", (s_buf,)),
        ):
            for d, prefix, arrow, who in ((0, "s", "src -> dst", "originator"), (1, "d", "dst -> src", "responder")):
                rows.append((f"{prefix}_{fam}_{stat}", f"{arrow} {desc} {what}", who, tuple(x + d for x in deps)))
    for b, flag in enumerate(FLAG_NAMES):
        rows.append((f"{flag}_cnt", f"number of packets with {flag.upper()} flag set", "both", (FLAG_CNT + b,)))
    return tuple(
        FeatureSpec(i, name, desc, who, step_closure(deps)) for i, (name, desc, who, deps) in enumerate(rows)
    )


FEATURES: tuple[FeatureSpec, ...] = _build()
N_FEATURES = len(FEATURES)
assert N_FEATURES == 67
FEATURE_INDEX: dict[str, int] = {f.name: f.id for f in FEATURES}

MINI_SET: tuple[str, ...] = ("dur", "s_load", "s_pkt_cnt", "s_bytes_sum", "s_bytes_mean", "s_iat_mean")


def registry() -> list[FeatureSpec]:
    return list(FEATURES)


def feature_ids(names) -> list[int]:
    """Resolve feature names to ids, raising KeyError naming the first unknown one."""
    out = []
    for name in names:
        if name not in FEATURE_INDEX:
            raise KeyError(name)
        out.append(FEATURE_INDEX[name])
    return out


def catalogue_csv() -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "name", "description"])
    for f in FEATURES:
        w.writerow([f.id, f.name, f.description])
    return buf.getvalue()
