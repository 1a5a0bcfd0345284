"""Packet traces in, labeled connections out.

Connections are bidirectional: the originator is whoever sent the first
observed packet, and every packet carries a direction flag relative to it
(0 = originator to responder, 1 = responder to originator). Timestamps are
integer microseconds.
"""
from __future__ import annotations

import csv
import ipaddress
import logging
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DataError, FormatError

log = logging.getLogger(__name__)

FORWARD = 0
BACKWARD = 1

TCP = 6
UDP = 17

FIN, SYN, RST, PSH, ACK, URG, ECE, CWR = 0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80

CSV_COLUMNS = (
    "flow_id", "ts_us", "dir", "frame_len", "proto", "src_port", "dst_port",
    "ip_ttl", "tcp_flags", "tcp_window", "label",
)

DEFAULT_IDLE_TIMEOUT_US = 300 * 1_000_000

# Bytes of synthetic Ethernet + IPv4 + TCP header kept per packet for the
# extraction kernels.
HEADER_LEN = 54


class PacketRecord(NamedTuple):
    flow_id: str
    ts: int
    dir: int
    frame_len: int
    proto: int
    src_port: int
    dst_port: int
    ip_ttl: int
    tcp_flags: int
    tcp_window: int


_INT_COLUMNS = ("ts", "dir", "frame_len", "proto", "src_port", "dst_port", "ip_ttl", "tcp_flags", "tcp_window")


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FlowRecord:
    """One connection, stored column-wise (one array per packet field)."""

    flow_id: str
    ts: np.ndarray
    dir: np.ndarray
    frame_len: np.ndarray
    proto: np.ndarray
    src_port: np.ndarray
    dst_port: np.ndarray
    ip_ttl: np.ndarray
    tcp_flags: np.ndarray
    tcp_window: np.ndarray
    label: object = None

    def __post_init__(self):
        n = len(self.ts)
        if n == 0:
            raise DataError(f"flow {self.flow_id!r} has no packets")
        for name in _INT_COLUMNS:
            arr = getattr(self, name)
            if len(arr) != n:
                raise DataError(f"flow {self.flow_id!r}: column {name} has {len(arr)} values, expected {n}")
        if int(self.dir[0]) != FORWARD:
            raise DataError(f"flow {self.flow_id!r}: first packet must travel originator->responder")
        if n > 1 and np.any(np.diff(self.ts) < 0):
            raise DataError(f"flow {self.flow_id!r}: timestamps decrease")

    @classmethod
    def from_columns(cls, flow_id: str, label=None, **columns) -> "FlowRecord":
        dtypes = {"dir": np.int8}
        arrays = {name: _frozen(columns[name], dtypes.get(name, np.int64)) for name in _INT_COLUMNS}
        return cls(flow_id=str(flow_id), label=label, **arrays)

    @classmethod
    def from_packets(cls, packets: Sequence[PacketRecord], label=None) -> "FlowRecord":
        if not packets:
            raise DataError("flow has no packets")
        fid = packets[0].flow_id
        if any(p.flow_id != fid for p in packets):
            raise DataError(f"packets of flow {fid!r} carry different flow ids")
        cols = {name: [getattr(p, name) for p in packets] for name in _INT_COLUMNS}
        return cls.from_columns(fid, label=label, **cols)

    def __len__(self) -> int:
        return len(self.ts)

    @property
    def packets(self) -> list[PacketRecord]:
        cols = [getattr(self, name).tolist() for name in _INT_COLUMNS]
        return [PacketRecord(self.flow_id, *row) for row in zip(*cols)]

    def with_label(self, label) -> "FlowRecord":
        cols = {name: getattr(self, name) for name in _INT_COLUMNS}
        return FlowRecord(flow_id=self.flow_id, label=label, **cols)


@dataclass(frozen=True)
class PackedFlows:
    """Concatenated packet columns plus per-flow offsets, ready for the kernels."""

    offsets: np.ndarray
    ts: np.ndarray
    dir: np.ndarray
    frame_len: np.ndarray
    headers: np.ndarray

    @property
    def n_flows(self) -> int:
        return len(self.offsets) - 1

    @property
    def max_len(self) -> int:
        return int(np.max(np.diff(self.offsets))) if self.n_flows else 0


def _ip_for(flow_index: int, side: int) -> bytes:
    # Deterministic private addresses; only their presence matters to the parser.
    base = 0x0A000000 if side == 0 else 0xC0A80000
    return struct.pack("!I", base + (flow_index % 0xFFFF) + 1)


def build_headers(flow: FlowRecord, flow_index: int = 0) -> np.ndarray:
    """Re-encode decoded packet fields as Ethernet/IPv4/TCP-or-UDP header bytes."""
    n = len(flow)
    hdr = np.zeros((n, HEADER_LEN), dtype=np.uint8)
    hdr[:, 12] = 0x08
    hdr[:, 13] = 0x00
    hdr[:, 14] = 0x45
    ip_a, ip_b = _ip_for(flow_index, 0), _ip_for(flow_index, 1)
    for i in range(n):
        row = hdr[i]
        total = max(0, min(int(flow.frame_len[i]) - 14, 0xFFFF))
        row[16], row[17] = total >> 8, total & 0xFF
        row[22] = int(flow.ip_ttl[i]) & 0xFF
        row[23] = int(flow.proto[i]) & 0xFF
        src, dst = (ip_a, ip_b) if int(flow.dir[i]) == FORWARD else (ip_b, ip_a)
        row[26:30] = np.frombuffer(src, dtype=np.uint8)
        row[30:34] = np.frombuffer(dst, dtype=np.uint8)
        sp, dp = int(flow.src_port[i]), int(flow.dst_port[i])
        row[34], row[35], row[36], row[37] = sp >> 8, sp & 0xFF, dp >> 8, dp & 0xFF
        if int(flow.proto[i]) == TCP:
            row[46] = 0x50
            row[47] = int(flow.tcp_flags[i]) & 0xFF
            win = int(flow.tcp_window[i]) & 0xFFFF
            row[48], row[49] = win >> 8, win & 0xFF
    return hdr


@dataclass(frozen=True, eq=False)
class Dataset:
    flows: tuple[FlowRecord, ...]
    task: str = "classification"
    label_domain: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise DataError(f"unknown task {self.task!r}")
        object.__setattr__(self, "flows", tuple(self.flows))
        if self.task == "classification" and self.labeled:
            domain = self.label_domain or frozenset(f.label for f in self.flows)
            object.__setattr__(self, "label_domain", frozenset(domain))
            bad = {f.label for f in self.flows} - self.label_domain
            if bad:
                raise DataError(f"labels outside label_domain: {sorted(map(str, bad))}")

    def __len__(self) -> int:
        return len(self.flows)

    @property
    def labeled(self) -> bool:
        return bool(self.flows) and all(f.label is not None for f in self.flows)

    @property
    def labels(self) -> np.ndarray:
        if self.task == "regression":
            return np.array([float(f.label) for f in self.flows], dtype=np.float64)
        return np.array([f.label for f in self.flows], dtype=object)

    @cached_property
    def packed(self) -> PackedFlows:
        lengths = [len(f) for f in self.flows]
        offsets = np.zeros(len(self.flows) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        if self.flows:
            ts = np.concatenate([f.ts for f in self.flows]).astype(np.int64)
            dirs = np.concatenate([f.dir for f in self.flows]).astype(np.int8)
            flen = np.concatenate([f.frame_len for f in self.flows]).astype(np.int64)
            hdr = np.concatenate([build_headers(f, i) for i, f in enumerate(self.flows)])
        else:
            ts = np.zeros(0, np.int64)
            dirs = np.zeros(0, np.int8)
            flen = np.zeros(0, np.int64)
            hdr = np.zeros((0, HEADER_LEN), np.uint8)
        for arr in (offsets, ts, dirs, flen, hdr):
            arr.setflags(write=False)
        return PackedFlows(offsets, ts, dirs, flen, hdr)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.flows[i] for i in indices), self.task, self.label_domain)

    def with_labels(self, mapping: Mapping[str, object]) -> "Dataset":
        missing = [f.flow_id for f in self.flows if f.flow_id not in mapping]
        if missing:
            raise DataError(f"{len(missing)} flows have no label, e.g. {missing[0]!r}")
        flows = tuple(f.with_label(mapping[f.flow_id]) for f in self.flows)
        return Dataset(flows, self.task)


# --------------------------------------------------------------------------
# Packet CSV

def load_packet_csv(path: str | Path, task: str = "classification") -> Dataset:
    """Read the packet-record CSV (one row per packet, header required)."""
    groups: dict[str, list[tuple]] = {}
    labels: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise FormatError(f"{path}: missing column(s) {', '.join(missing)}")
        idx = [header.index(c) for c in CSV_COLUMNS]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                vals = [row[i] for i in idx]
                fid, label = vals[0], vals[-1]
                nums = tuple(int(v) for v in vals[1:-1])
            except (IndexError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if fid in labels and labels[fid] != label:
                raise DataError(f"{path}:{lineno}: flow {fid!r} has labels {labels[fid]!r} and {label!r}")
            labels[fid] = label
            groups.setdefault(fid, []).append(nums)

    flows = []
    for fid, rows in groups.items():
        rows.sort(key=lambda r: r[0])  # stable: equal timestamps keep file order
        cols = list(zip(*rows))
        label = labels[fid]
        if task == "regression":
            label = float(label)
        flows.append(FlowRecord.from_columns(fid, label, **dict(zip(_INT_COLUMNS, cols))))
    return Dataset(tuple(flows), task)


def write_packet_csv(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for flow in dataset.flows:
            for p in flow.packets:
                w.writerow([p.flow_id, p.ts, p.dir, p.frame_len, p.proto, p.src_port, p.dst_port,
                            p.ip_ttl, p.tcp_flags, p.tcp_window, flow.label])


def load_labels(path: str | Path) -> dict[str, str]:
    """Sidecar mapping file with columns ``flow_id,label``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"flow_id", "label"} <= set(reader.fieldnames):
            raise FormatError(f"{path}: label file needs columns flow_id,label")
        return {row["flow_id"]: row["label"] for row in reader}


# --------------------------------------------------------------------------
# pcap

PCAP_MAGICS = {
    0xA1B2C3D4: ("<", 1),
    0xD4C3B2A1: (">", 1),
    0xA1B23C4D: ("<", 1000),   # nanosecond resolution
    0x4D3CB2A1: (">", 1000),
}
LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101


@dataclass
class PcapStats:
    packets: int = 0
    truncated: int = 0
    skipped: int = 0


def _parse_ip_packet(buf: bytes, off: int):
    """Decode IPv4 + TCP/UDP header fields, or None if not applicable."""
    if len(buf) < off + 20 or buf[off] >> 4 != 4:
        return None
    ihl = (buf[off] & 0x0F) * 4
    ttl, proto = buf[off + 8], buf[off + 9]
    src, dst = buf[off + 12:off + 16], buf[off + 16:off + 20]
    l4 = off + ihl
    if proto == TCP:
        if len(buf) < l4 + 20:
            return None
        sport, dport = struct.unpack_from("!HH", buf, l4)
        flags = buf[l4 + 13]
        (window,) = struct.unpack_from("!H", buf, l4 + 14)
    elif proto == UDP:
        if len(buf) < l4 + 8:
            return None
        sport, dport = struct.unpack_from("!HH", buf, l4)
        flags, window = 0, 0
    else:
        return None
    return src, dst, sport, dport, proto, ttl, flags, window


class _OpenFlow:
    __slots__ = ("fid", "orig", "rows", "last_ts", "fin_fwd", "fin_bwd", "closed")

    def __init__(self, fid, orig):
        self.fid = fid
        self.orig = orig
        self.rows: list[tuple] = []
        self.last_ts = 0
        self.fin_fwd = self.fin_bwd = False
        self.closed = False


def load_pcap(path: str | Path, idle_timeout_us: int = DEFAULT_IDLE_TIMEOUT_US,
              stats: PcapStats | None = None) -> Dataset:
    """Group a libpcap capture into bidirectional connections (unlabeled)."""
    data = Path(path).read_bytes()
    if len(data) < 24:
        raise FormatError(f"{path}: too short for a pcap global header")
    (magic,) = struct.unpack_from("<I", data, 0)
    if magic not in PCAP_MAGICS:
        raise FormatError(f"{path}: bad pcap magic 0x{magic:08x}")
    endian, frac_div = PCAP_MAGICS[magic]
    linktype = struct.unpack_from(endian + "I", data, 20)[0] & 0x0FFFFFFF
    if linktype not in (LINKTYPE_ETHERNET, LINKTYPE_RAW):
        raise FormatError(f"{path}: unsupported link type {linktype}")
    stats = stats if stats is not None else PcapStats()

    open_flows: dict[tuple, _OpenFlow] = {}
    done: list[_OpenFlow] = []
    counters: dict[tuple, int] = {}
    off = 24
    while off < len(data):
        if off + 16 > len(data):
            stats.truncated += 1
            break
        sec, frac, incl, orig_len = struct.unpack_from(endian + "IIII", data, off)
        off += 16
        if off + incl > len(data):
            stats.truncated += 1
            break
        pkt = data[off:off + incl]
        off += incl
        ts = sec * 1_000_000 + frac // frac_div

        ip_off = 0
        if linktype == LINKTYPE_ETHERNET:
            if len(pkt) < 14:
                stats.skipped += 1
                continue
            etype = struct.unpack_from("!H", pkt, 12)[0]
            ip_off = 14
            if etype == 0x8100 and len(pkt) >= 18:
                etype = struct.unpack_from("!H", pkt, 16)[0]
                ip_off = 18
            if etype != 0x0800:
                stats.skipped += 1
                continue
        fields_ = _parse_ip_packet(pkt, ip_off)
        if fields_ is None:
            stats.skipped += 1
            continue
        src, dst, sport, dport, proto, ttl, flags, window = fields_
        a, b = (src, sport), (dst, dport)
        key = (min(a, b), max(a, b), proto)
        flow = open_flows.get(key)
        if flow is not None and (flow.closed or ts - flow.last_ts > idle_timeout_us
                                 or (proto == TCP and flags & SYN and not flags & ACK and flow.fin_fwd and flow.fin_bwd)):
            done.append(flow)
            flow = None
        if flow is None:
            k = counters.get(key, 0)
            counters[key] = k + 1
            fid = f"{ipaddress.ip_address(src)}:{sport}-{ipaddress.ip_address(dst)}:{dport}-{proto}"
            if k:
                fid += f"#{k}"
            flow = _OpenFlow(fid, a)
            open_flows[key] = flow
        direction = FORWARD if a == flow.orig else BACKWARD
        flow.rows.append((ts, direction, orig_len, proto, sport, dport, ttl, flags, window))
        flow.last_ts = ts
        stats.packets += 1
        if proto == TCP:
            if flags & RST:
                flow.closed = True
            elif flags & FIN:
                if direction == FORWARD:
                    flow.fin_fwd = True
                else:
                    flow.fin_bwd = True
            elif flow.fin_fwd and flow.fin_bwd and flags & ACK:
                flow.closed = True
    done.extend(open_flows.values())
    if stats.truncated:
        log.warning("%s: %d truncated packet record(s) skipped", path, stats.truncated)

    records = []
    for flow in sorted(done, key=lambda f: f.rows[0][0]):
        rows = sorted(flow.rows, key=lambda r: r[0])
        cols = dict(zip(_INT_COLUMNS, zip(*rows)))
        if cols["dir"][0] != FORWARD:
            # Reordering by timestamp can put a responder packet first; the
            # earliest sender becomes the originator.
            cols["dir"] = tuple(1 - d for d in cols["dir"])
        records.append(FlowRecord.from_columns(flow.fid, None, **cols))
    return Dataset(tuple(records))


def write_pcap(path: str | Path, dataset: Dataset, nanosecond: bool = False) -> None:
    """Write a dataset as an Ethernet pcap, interleaving flows by timestamp."""
    magic = 0xA1B23C4D if nanosecond else 0xA1B2C3D4
    out = [struct.pack("<IHHiIII", magic, 2, 4, 0, 0, 65535, LINKTYPE_ETHERNET)]
    events = []
    for i, flow in enumerate(dataset.flows):
        hdr = build_headers(flow, i)
        for j in range(len(flow)):
            events.append((int(flow.ts[j]), i, j, hdr[j].tobytes(), int(flow.frame_len[j]), int(flow.proto[j])))
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    for ts, _i, _j, raw, flen, proto in events:
        raw = raw if proto == TCP else raw[:42]
        if proto == UDP:
            raw = raw[:38] + struct.pack("!HH", 8, 0)
        caplen = len(raw)
        frac = (ts % 1_000_000) * (1000 if nanosecond else 1)
        out.append(struct.pack("<IIII", ts // 1_000_000, frac, caplen, max(flen, caplen)))
        out.append(raw)
    Path(path).write_bytes(b"".join(out))


def pcap_flow_id(flow: FlowRecord, flow_index: int) -> str:
    """Flow id that :func:`load_pcap` assigns to ``flow`` after :func:`write_pcap`."""
    src = ipaddress.ip_address(_ip_for(flow_index, 0))
    dst = ipaddress.ip_address(_ip_for(flow_index, 1))
    return f"{src}:{int(flow.src_port[0])}-{dst}:{int(flow.dst_port[0])}-{int(flow.proto[0])}"


def write_labels(path: str | Path, dataset: Dataset, ids=None) -> None:
    """Sidecar ``flow_id,label`` file; ``ids`` overrides the flow ids (e.g. pcap ids)."""
    ids = ids or [f.flow_id for f in dataset.flows]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["flow_id", "label"])
        for fid, flow in zip(ids, dataset.flows):
            w.writerow([fid, flow.label])


# --------------------------------------------------------------------------
# Synthetic traffic

@dataclass(frozen=True)
class ClassProfile:
    """Per-class traffic distributions for :func:`synth_generate`."""

    proto: int = TCP
    dst_port: int = 443
    syn_size: int = 74
    size_mean_fwd: float = 400.0
    size_mean_bwd: float = 900.0
    size_std: float = 200.0
    flow_size_jitter: float = 0.15
    iat_median_us: float = 20_000.0
    iat_sigma: float = 1.0
    p_forward: float = 0.5
    ttl_fwd: int = 64
    ttl_bwd: int = 52
    window: int = 29200
    min_packets: int = 40
    max_packets: int = 160


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 2
    flows_per_class: int = 10
    profiles: tuple[ClassProfile, ...] | None = None


def random_profiles(n_classes: int, seed: int) -> tuple[ClassProfile, ...]:
    """Draw distinct class profiles; classes overlap enough that depth matters."""
    rng = np.random.default_rng([seed, 0xC1A55])
    profiles = []
    for k in range(n_classes):
        proto = TCP if rng.random() < 0.8 else UDP
        profiles.append(ClassProfile(
            proto=proto,
            dst_port=int(rng.choice([80, 443, 443, 8883, 1883, 5683, 123, 53])),
            syn_size=int(rng.choice([60, 66, 74, 78])) if proto == TCP else int(rng.integers(60, 300)),
            size_mean_fwd=float(rng.uniform(90, 1100)),
            size_mean_bwd=float(rng.uniform(90, 1400)),
            size_std=float(rng.uniform(120, 380)),
            flow_size_jitter=float(rng.uniform(0.05, 0.2)),
            iat_median_us=float(np.exp(rng.uniform(np.log(500), np.log(300_000)))),
            iat_sigma=float(rng.uniform(0.9, 1.6)),
            p_forward=float(rng.uniform(0.3, 0.7)),
            ttl_fwd=int(rng.choice([64, 128, 255]) - rng.integers(0, 3)),
            ttl_bwd=int(rng.choice([64, 128, 255]) - rng.integers(4, 20)),
            window=int(rng.integers(1024, 65535)),
        ))
    return tuple(profiles)


def _synth_flow(rng: np.random.Generator, prof: ClassProfile, fid: str, label, sport: int) -> FlowRecord:
    n = int(rng.integers(prof.min_packets, prof.max_packets + 1))
    dirs = (rng.random(n) >= prof.p_forward).astype(np.int64)
    dirs[0] = FORWARD
    jitter = 1.0 + prof.flow_size_jitter * rng.standard_normal(2)
    means = np.where(dirs == FORWARD, prof.size_mean_fwd * jitter[0], prof.size_mean_bwd * jitter[1])
    sizes = np.clip(np.rint(rng.normal(means, prof.size_std)), 60, 1514).astype(np.int64)
    iat_scale = prof.iat_median_us * np.exp(0.3 * rng.standard_normal())
    iats = np.rint(rng.lognormal(np.log(iat_scale), prof.iat_sigma, n)).astype(np.int64)
    iats[0] = 0
    ts = np.cumsum(iats) + int(rng.integers(0, 10_000_000))
    flags = np.zeros(n, dtype=np.int64)
    windows = np.zeros(n, dtype=np.int64)
    if prof.proto == TCP:
        if n >= 3:
            dirs[:3] = (FORWARD, BACKWARD, FORWARD)
            flags[:3] = (SYN, SYN | ACK, ACK)
            sizes[:3] = (prof.syn_size, prof.syn_size - 8 if prof.syn_size > 68 else prof.syn_size, 54 + 12 * (prof.syn_size > 66))
        flags[3:] = ACK | np.where(rng.random(max(n - 3, 0)) < 0.4, PSH, 0)
        windows[:] = np.clip(prof.window + rng.integers(-512, 513, n), 0, 65535)
    ttl = np.where(dirs == FORWARD, prof.ttl_fwd, prof.ttl_bwd).astype(np.int64)
    src = np.where(dirs == FORWARD, sport, prof.dst_port)
    dst = np.where(dirs == FORWARD, prof.dst_port, sport)
    return FlowRecord.from_columns(
        fid, label, ts=ts, dir=dirs, frame_len=sizes, proto=np.full(n, prof.proto), src_port=src,
        dst_port=dst, ip_ttl=ttl, tcp_flags=flags, tcp_window=windows,
    )


def synth_generate(spec: SynthSpec, seed: int) -> Dataset:
    """Labeled synthetic connections; a pure function of ``(spec, seed)``."""
    if spec.n_classes < 2:
        raise ValueError("synthetic data needs at least 2 classes")
    if spec.flows_per_class < 1:
        raise ValueError("flows_per_class must be positive")
    profiles = spec.profiles or random_profiles(spec.n_classes, seed)
    if len(profiles) != spec.n_classes:
        raise ValueError(f"{len(profiles)} profiles given for {spec.n_classes} classes")
    rng = np.random.default_rng([seed, 0x5EED])
    flows = []
    for k, prof in enumerate(profiles):
        for j in range(spec.flows_per_class):
            sport = int(rng.integers(1024, 65535))
            flows.append(_synth_flow(rng, prof, f"c{k}-f{j}", f"class{k}", sport))
    return Dataset(tuple(flows), "classification", frozenset(f"class{k}" for k in range(spec.n_classes)))


def _stratified_quotas(sizes: list[int], total: int) -> list[int]:
    # Largest-remainder allocation, each class keeping >= 1 flow on both sides.
    n = sum(sizes)
    exact = [total * s / n for s in sizes]
    quotas = [min(max(int(e), 1), s - 1) for e, s in zip(exact, sizes)]
    by_remainder = sorted(range(len(sizes)), key=lambda i: (-(exact[i] - int(exact[i])), i))
    while sum(quotas) < total:
        grown = False
        for i in by_remainder:
            if sum(quotas) >= total:
                break
            if quotas[i] < sizes[i] - 1:
                quotas[i] += 1
                grown = True
        if not grown:
            break
    while sum(quotas) > total:
        shrunk = False
        for i in reversed(by_remainder):
            if sum(quotas) <= total:
                break
            if quotas[i] > 1:
                quotas[i] -= 1
                shrunk = True
        if not shrunk:
            break
    return quotas


def split_holdout(dataset: Dataset, fraction: float = 0.2, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified split by flow into (train, test)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"holdout fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng([seed, 0x5B17])
    n = len(dataset)
    if dataset.task == "classification":
        labels = [f.label for f in dataset.flows]
        groups: dict[object, list[int]] = {}
        for i, lab in enumerate(labels):
            groups.setdefault(lab, []).append(i)
        order = sorted(groups, key=str)
        for lab in order:
            if len(groups[lab]) < 2:
                raise DataError(f"class {lab!r} has fewer than 2 flows; cannot stratify")
        quotas = _stratified_quotas([len(groups[lab]) for lab in order], int(round(fraction * n)))
        test: list[int] = []
        for lab, k in zip(order, quotas):
            test.extend(rng.permutation(np.array(groups[lab]))[:k].tolist())
    else:
        k = min(max(int(round(fraction * n)), 1), n - 1)
        test = rng.permutation(n)[:k].tolist()
    test_set = set(test)
    train_idx = [i for i in range(n) if i not in test_set]
    return dataset.subset(train_idx), dataset.subset(sorted(test))
