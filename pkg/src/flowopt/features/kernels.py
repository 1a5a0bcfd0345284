"""Hot loops: per-packet feature extraction and tree-ensemble inference.

Everything here sticks to the numba nopython subset. With numba disabled the
same functions run interpreted (see ``flowopt._accel``).
"""
from __future__ import annotations

import math

import numpy as np

from .._accel import jit

# step ids, duplicated as plain ints so the kernels see compile-time constants
READ_TS, READ_DIR, READ_LEN, PARSE_ETH, PARSE_IP, PARSE_L4 = 0, 1, 2, 3, 4, 5
SPAN, META_PROTO, META_PORTS, HANDSHAKE = 6, 7, 8, 9
CNT, BYTES_SUM, BYTES_MIN, BYTES_MAX, BYTES_BUF = 10, 12, 14, 16, 18
IAT_LAST, IAT_CNT, IAT_SUM, IAT_MIN, IAT_MAX, IAT_BUF = 20, 22, 24, 26, 28, 30
WIN_SUM, WIN_MIN, WIN_MAX, WIN_BUF = 32, 34, 36, 38
TTL_SUM, TTL_MIN, TTL_MAX, TTL_BUF = 40, 42, 44, 46
FLAG_CNT = 48

BIG = 9223372036854775807

# registry layout: feature id -> (family base id, stat); see registry._build
F_BYTES, F_IAT, F_WIN, F_TTL = 11, 23, 35, 47
F_FLAGS = 59


@jit
def _median(buf, n):
    s = np.sort(buf[:n])
    h = n // 2
    if n % 2 == 1:
        return float(s[h])
    return (float(s[h - 1]) + float(s[h])) / 2.0


@jit
def _std(buf, n, total):
    mean = float(total) / n
    acc = 0.0
    for i in range(n):
        d = float(buf[i]) - mean
        acc += d * d
    return math.sqrt(acc / n)


@jit
def _bufsum(buf, n):
    s = 0
    for i in range(n):
        s += buf[i]
    return s


@jit
def _fam_value(stat, n, total, lo, hi, buf, nb):
    # stat: 0 sum, 1 mean, 2 min, 3 max, 4 median, 5 std; undefined -> 0
    if stat == 0:
        return float(total)
    if stat == 1:
        return float(total) / n if n > 0 else 0.0
    if stat == 2:
        return float(lo) if lo != BIG else 0.0
    if stat == 3:
        return float(hi)
    if nb == 0:
        return 0.0
    if stat == 4:
        return _median(buf, nb)
    return _std(buf, nb, _bufsum(buf, nb))


@jit
def extract_flows(offsets, ts, dirs, flen, hdr, en, columns, limit, out, inspected, scratch):
    """Run the enabled steps over the first ``limit`` packets of every flow.

    ``scratch`` rows hold value buffers: bytes fwd/bwd, iat fwd/bwd,
    window fwd/bwd, ttl fwd/bwd.
    """
    n_flows = offsets.shape[0] - 1
    cnt = np.zeros(2, np.int64)
    bsum = np.zeros(2, np.int64)
    bmin = np.zeros(2, np.int64)
    bmax = np.zeros(2, np.int64)
    ilast = np.zeros(2, np.int64)
    iseen = np.zeros(2, np.int64)
    icnt = np.zeros(2, np.int64)
    isum = np.zeros(2, np.int64)
    imin = np.zeros(2, np.int64)
    imax = np.zeros(2, np.int64)
    wsum = np.zeros(2, np.int64)
    wmin = np.zeros(2, np.int64)
    wmax = np.zeros(2, np.int64)
    tsum = np.zeros(2, np.int64)
    tmin = np.zeros(2, np.int64)
    tmax = np.zeros(2, np.int64)
    flags_cnt = np.zeros(8, np.int64)
    nbuf = np.zeros(8, np.int64)

    for f in range(n_flows):
        start = offsets[f]
        stop = offsets[f + 1]
        if stop - start > limit:
            stop = start + limit
        for d in range(2):
            cnt[d] = 0
            bsum[d] = 0
            bmin[d] = BIG
            bmax[d] = 0
            ilast[d] = 0
            iseen[d] = 0
            icnt[d] = 0
            isum[d] = 0
            imin[d] = BIG
            imax[d] = 0
            wsum[d] = 0
            wmin[d] = BIG
            wmax[d] = 0
            tsum[d] = 0
            tmin[d] = BIG
            tmax[d] = 0
        for b in range(8):
            flags_cnt[b] = 0
            nbuf[b] = 0
        first_ts = 0
        last_ts = 0
        proto0 = -1
        sport0 = 0
        dport0 = 0
        syn_t = -1
        synack_t = -1
        ack_t = -1

        t = 0
        d = 0
        ln = 0
        ip_ok = False
        ttl = 0
        proto = 0
        l4 = 0
        tcp = False
        win = 0
        fl = 0
        sp = 0
        dp = 0
        for i in range(start, stop):
            if en[READ_TS]:
                t = ts[i]
            if en[READ_DIR]:
                d = dirs[i]
            if en[READ_LEN]:
                ln = flen[i]
            if en[PARSE_ETH]:
                ip_ok = hdr[i, 12] == 0x08 and hdr[i, 13] == 0x00
            if en[PARSE_IP]:
                if ip_ok:
                    l4 = 14 + (hdr[i, 14] & 0x0F) * 4
                    ttl = hdr[i, 22]
                    proto = hdr[i, 23]
                else:
                    l4 = 0
                    ttl = 0
                    proto = 0
            if en[PARSE_L4]:
                tcp = proto == 6
                if l4 > 0 and (proto == 6 or proto == 17):
                    sp = (np.int64(hdr[i, l4]) << 8) | hdr[i, l4 + 1]
                    dp = (np.int64(hdr[i, l4 + 2]) << 8) | hdr[i, l4 + 3]
                else:
                    sp = 0
                    dp = 0
                if tcp:
                    fl = hdr[i, l4 + 13]
                    win = (np.int64(hdr[i, l4 + 14]) << 8) | hdr[i, l4 + 15]
                else:
                    fl = 0
                    win = 0

            if en[SPAN]:
                if i == start:
                    first_ts = t
                last_ts = t
            if i == start:
                if en[META_PROTO]:
                    proto0 = proto
                if en[META_PORTS]:
                    sport0 = sp
                    dport0 = dp
            if en[HANDSHAKE] and tcp:
                is_syn = (fl & 0x02) != 0
                is_ack = (fl & 0x10) != 0
                if syn_t < 0:
                    if d == 0 and is_syn and not is_ack:
                        syn_t = t
                elif synack_t < 0:
                    if d == 1 and is_syn and is_ack:
                        synack_t = t
                elif ack_t < 0:
                    if d == 0 and is_ack and not is_syn:
                        ack_t = t

            if en[CNT + d]:
                cnt[d] += 1
            if en[BYTES_SUM + d]:
                bsum[d] += ln
            if en[BYTES_MIN + d]:
                if ln < bmin[d]:
                    bmin[d] = ln
            if en[BYTES_MAX + d]:
                if ln > bmax[d]:
                    bmax[d] = ln
            if en[BYTES_BUF + d]:
                scratch[d, nbuf[d]] = ln
                nbuf[d] += 1
            if en[IAT_LAST + d]:
                if iseen[d] != 0:
                    iat = t - ilast[d]
                    if en[IAT_CNT + d]:
                        icnt[d] += 1
                    if en[IAT_SUM + d]:
                        isum[d] += iat
                    if en[IAT_MIN + d]:
                        if iat < imin[d]:
                            imin[d] = iat
                    if en[IAT_MAX + d]:
                        if iat > imax[d]:
                            imax[d] = iat
                    if en[IAT_BUF + d]:
                        scratch[2 + d, nbuf[2 + d]] = iat
                        nbuf[2 + d] += 1
                iseen[d] = 1
                ilast[d] = t
            if en[WIN_SUM + d]:
                wsum[d] += win
            if en[WIN_MIN + d]:
                if win < wmin[d]:
                    wmin[d] = win
            if en[WIN_MAX + d]:
                if win > wmax[d]:
                    wmax[d] = win
            if en[WIN_BUF + d]:
                scratch[4 + d, nbuf[4 + d]] = win
                nbuf[4 + d] += 1
            if en[TTL_SUM + d]:
                tsum[d] += ttl
            if en[TTL_MIN + d]:
                if ttl < tmin[d]:
                    tmin[d] = ttl
            if en[TTL_MAX + d]:
                if ttl > tmax[d]:
                    tmax[d] = ttl
            if en[TTL_BUF + d]:
                scratch[6 + d, nbuf[6 + d]] = ttl
                nbuf[6 + d] += 1
            for b in range(8):
                if en[FLAG_CNT + b]:
                    if fl & (0x80 >> b):
                        flags_cnt[b] += 1
        inspected[f] = stop - start

        for c in range(columns.shape[0]):
            fid = columns[c]
            v = 0.0
            if fid == 0:
                v = float(last_ts - first_ts)
            elif fid == 1:
                v = float(proto0)
            elif fid == 2:
                v = float(sport0)
            elif fid == 3:
                v = float(dport0)
            elif fid == 4 or fid == 5:
                dur = last_ts - first_ts
                if dur > 0:
                    v = float(bsum[fid - 4]) * 8000000.0 / float(dur)
            elif fid == 6 or fid == 7:
                v = float(cnt[fid - 6])
            elif fid <= 10:
                if fid == 9:
                    if syn_t >= 0 and synack_t >= 0:
                        v = float(synack_t - syn_t)
                elif ack_t >= 0:
                    if fid == 8:
                        v = float(ack_t - syn_t)
                    else:
                        v = float(ack_t - synack_t)
            elif fid < F_FLAGS:
                k = fid - F_BYTES
                fam = k // 12
                stat = (k % 12) // 2
                dd = k % 2
                row = 2 * fam + dd
                if fam == 0:
                    v = _fam_value(stat, cnt[dd], bsum[dd], bmin[dd], bmax[dd], scratch[row], nbuf[row])
                elif fam == 1:
                    v = _fam_value(stat, icnt[dd], isum[dd], imin[dd], imax[dd], scratch[row], nbuf[row])
                elif fam == 2:
                    v = _fam_value(stat, cnt[dd], wsum[dd], wmin[dd], wmax[dd], scratch[row], nbuf[row])
                else:
                    v = _fam_value(stat, cnt[dd], tsum[dd], tmin[dd], tmax[dd], scratch[row], nbuf[row])
            else:
                v = float(flags_cnt[fid - F_FLAGS])
            out[f, c] = v


@jit
def predict_ensemble(X, roots, left, right, feature, threshold, leaf_values, classify, out_idx, out_val):
    """Tree-ensemble inference.

    Inputs are rounded to float32 before each split comparison, as the trees
    were fit on float32 data. Classification writes the argmax of the summed
    leaf probabilities to ``out_idx``; regression writes the mean leaf value
    to ``out_val``.
    """
    n_trees = roots.shape[0]
    width = leaf_values.shape[1]
    acc = np.zeros(width, np.float64)
    for r in range(X.shape[0]):
        for k in range(width):
            acc[k] = 0.0
        for t in range(n_trees):
            node = roots[t]
            while left[node] != -1:
                if np.float64(np.float32(X[r, feature[node]])) <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            for k in range(width):
                acc[k] += leaf_values[node, k]
        if classify:
            best = 0
            best_v = acc[0] / n_trees
            for k in range(1, width):
                v = acc[k] / n_trees
                if v > best_v:
                    best_v = v
                    best = k
            out_idx[r] = best
        else:
            out_val[r] = acc[0] / n_trees
