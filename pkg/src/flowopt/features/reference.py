"""Straightforward whole-flow feature computation used as a test oracle.

Buffers the packets of the window and evaluates every registry feature from
its definition, with no step sharing. Arithmetic mirrors the kernel's
operation order so results can be compared bit for bit.
"""
from __future__ import annotations

import math

from ..ingest import ACK, SYN, TCP, FlowRecord
from .registry import FEATURES, FLAG_BITS


def _mean(values):
    return sum(values) / len(values) if values else 0.0


def _median(values):
    if not values:
        return 0.0
    s = sorted(values)
    h = len(s) // 2
    return float(s[h]) if len(s) % 2 else (float(s[h - 1]) + float(s[h])) / 2.0


def _std(values):
    if not values:
        return 0.0
    mean = float(sum(values)) / len(values)
    acc = 0.0
    for v in values:  # plain loop: builtin sum() of floats is compensated
        d = float(v) - mean
        acc += d * d
    return math.sqrt(acc / len(values))


def _stats(values):
    return {
        "sum": float(sum(values)),
        "mean": _mean(values),
        "min": float(min(values)) if values else 0.0,
        "max": float(max(values)) if values else 0.0,
        "med": _median(values),
        "std": _std(values),
    }


def reference_features(flow: FlowRecord, depth: int | None) -> dict[str, float]:
    pkts = flow.packets if depth is None else flow.packets[:depth]
    out: dict[str, float] = {}
    first, last = pkts[0], pkts[-1]
    dur = last.ts - first.ts
    out["dur"] = float(dur)
    out["proto"] = float(first.proto)
    out["s_port"] = float(first.src_port)
    out["d_port"] = float(first.dst_port)
    sides = {"s": [p for p in pkts if p.dir == 0], "d": [p for p in pkts if p.dir == 1]}
    is_tcp = first.proto == TCP
    for side, ps in sides.items():
        size = [p.frame_len for p in ps]
        out[f"{side}_load"] = float(sum(size)) * 8000000.0 / float(dur) if dur > 0 else 0.0
        out[f"{side}_pkt_cnt"] = float(len(ps))
        times = [p.ts for p in ps]
        iat = [b - a for a, b in zip(times, times[1:])]
        win = [p.tcp_window if p.proto == TCP else 0 for p in ps]
        ttl = [p.ip_ttl for p in ps]
        for fam, vals in (("bytes", size), ("iat", iat), ("winsize", win), ("ttl", ttl)):
            for stat, v in _stats(vals).items():
                out[f"{side}_{fam}_{stat}"] = v

    syn = synack = ack = None
    if is_tcp:
        for p in pkts:
            f_syn, f_ack = bool(p.tcp_flags & SYN), bool(p.tcp_flags & ACK)
            if syn is None:
                if p.dir == 0 and f_syn and not f_ack:
                    syn = p.ts
            elif synack is None:
                if p.dir == 1 and f_syn and f_ack:
                    synack = p.ts
            elif ack is None and p.dir == 0 and f_ack and not f_syn:
                ack = p.ts
    out["syn_ack"] = float(synack - syn) if synack is not None else 0.0
    out["tcp_rtt"] = float(ack - syn) if ack is not None else 0.0
    out["ack_dat"] = float(ack - synack) if ack is not None else 0.0

    for name, bit in zip(("cwr", "ece", "urg", "ack", "psh", "rst", "syn", "fin"), FLAG_BITS):
        out[f"{name}_cnt"] = float(sum(1 for p in pkts if p.proto == TCP and p.tcp_flags & bit))
    assert set(out) == {f.name for f in FEATURES}
    return out


def reference_vector(flow: FlowRecord, depth: int | None, ids) -> list[float]:
    feats = reference_features(flow, depth)
    return [feats[FEATURES[i].name] for i in ids]
