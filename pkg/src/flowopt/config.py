"""Experiment configuration: one JSON document, validated field by field."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .features import FEATURE_INDEX, MINI_SET, N_FEATURES, FEATURES

SEARCH_METHODS = ("bo", "bo-base", "rand", "iterall", "simanneal")
ABLATION_METHODS = {
    "bo-naive-cost": ("naive_cost", "measured"),
    "bo-model-inf-cost": ("model_inf_cost", "measured"),
    "bo-pkt-depth-cost": ("pkt_depth_cost", "measured"),
    "bo-naive-perf": ("exec_time", "naive_mi"),
}

DEFAULTS: dict[str, Any] = {
    "experiment": "default",
    "data": {"source": "synthetic", "n_classes": 8, "flows_per_class": 100, "seed": 1},
    "holdout": 0.2,
    "split_seed": 0,
    "replay": "all",
    "features": "mini",
    "max_depth": 50,
    "allow_unbounded": False,
    "budget": 50,
    "cost_metric": {"kind": "exec_time", "repetitions": 5, "warmup_passes": 1},
    "perf_metric": "measured",
    "model": {"kind": "decision_tree", "depth_grid": [3, 5, 10, 15, 20], "n_estimators": 100, "cv_folds": 5},
    "prior": {"delta": 0.4, "depth_alpha": 1.0, "depth_beta": 2.0, "mi_epsilon": 1e-3},
    "optimizer": {"init_samples": 3, "candidates": 5000, "prior_decay": None, "ei_jitter": 0.01, "n_trees": 50},
    "methods": ["bo"],
    "seeds": [0],
    "ground_truth": None,
    "output_dir": "out",
}

# keys that never change measured values, left out of the config hash
_UNHASHED = ("output_dir", "seeds", "methods", "experiment")


def _merge(base: dict, over: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            raise ConfigError(f"{where}: unknown field")
        if isinstance(base[k], dict) and k != "data":
            if not isinstance(v, dict):
                raise ConfigError(f"{where}: expected an object")
            out[k] = _merge(base[k], v, where)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _require(cond: bool, field: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{field}: {msg}")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def name(self) -> str:
        return self.raw["experiment"]

    @property
    def feature_ids(self) -> tuple[int, ...]:
        f = self.raw["features"]
        if f == "mini":
            return tuple(sorted(FEATURE_INDEX[n] for n in MINI_SET))
        if f == "all":
            return tuple(range(N_FEATURES))
        return tuple(sorted(FEATURE_INDEX[n] for n in f))

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])

    def hash(self) -> str:
        return config_hash(self.raw)

    def with_changes(self, **changes) -> "ExperimentConfig":
        return from_dict(_merge(self.raw, changes, ""))

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=2)


def config_hash(raw: dict) -> str:
    body = {k: v for k, v in raw.items() if k not in _UNHASHED}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


def _validate(c: dict) -> None:
    _require(isinstance(c["experiment"], str) and c["experiment"].strip() != "", "experiment",
             "must be a non-empty string")
    data = c["data"]
    _require(isinstance(data, dict) and "source" in data, "data", "must be an object with a 'source'")
    src = data["source"]
    if src == "synthetic":
        for k in data:
            _require(k in ("source", "n_classes", "flows_per_class", "seed"), f"data.{k}", "unknown field")
        _require(_is_int(data.get("n_classes", 8)) and data.get("n_classes", 8) >= 2, "data.n_classes", "must be an integer >= 2")
        _require(_is_int(data.get("flows_per_class", 100)) and data.get("flows_per_class", 100) >= 2,
                 "data.flows_per_class", "must be an integer >= 2")
        _require(_is_int(data.get("seed", 1)), "data.seed", "must be an integer")
    elif src in ("csv", "pcap"):
        _require(isinstance(data.get("path"), str), "data.path", "must name a file")
        if src == "pcap":
            _require(isinstance(data.get("labels"), str), "data.labels", "pcap input needs a labels file")
        _require(data.get("task", "classification") in ("classification", "regression"), "data.task",
                 "must be classification or regression")
    else:
        raise ConfigError(f"data.source: unknown source {src!r}; expected synthetic, csv or pcap")

    _require(_num(c["holdout"]) and 0 < c["holdout"] < 1, "holdout", "must lie in (0, 1)")
    _require(_is_int(c["split_seed"]), "split_seed", "must be an integer")
    _require(c["replay"] in ("all", "test"), "replay", "must be 'all' or 'test'")
    f = c["features"]
    if isinstance(f, list):
        _require(len(f) > 0, "features", "must not be empty")
        for i, name in enumerate(f):
            _require(isinstance(name, str) and name in FEATURE_INDEX, f"features[{i}]",
                     f"unknown feature {name!r}")
        _require(len(set(f)) == len(f), "features", "contains duplicates")
    else:
        _require(f in ("mini", "all"), "features", "must be 'mini', 'all' or a list of feature names")
    _require(_is_int(c["max_depth"]) and c["max_depth"] >= 1, "max_depth", "must be an integer >= 1")
    _require(isinstance(c["allow_unbounded"], bool), "allow_unbounded", "must be a boolean")
    _require(_is_int(c["budget"]) and c["budget"] >= 1, "budget", "must be an integer >= 1")

    cm = c["cost_metric"]
    from .profiler import COST_KINDS, PERF_KINDS
    _require(cm["kind"] in COST_KINDS, "cost_metric.kind", f"must be one of {', '.join(COST_KINDS)}")
    _require(_is_int(cm["repetitions"]) and cm["repetitions"] >= 1 and cm["repetitions"] % 2 == 1,
             "cost_metric.repetitions", "must be a positive odd integer")
    _require(_is_int(cm["warmup_passes"]) and cm["warmup_passes"] >= 0, "cost_metric.warmup_passes",
             "must be an integer >= 0")
    _require(c["perf_metric"] in PERF_KINDS, "perf_metric", f"must be one of {', '.join(PERF_KINDS)}")

    m = c["model"]
    _require(m["kind"] in ("decision_tree", "random_forest"), "model.kind", "must be decision_tree or random_forest")
    _require(isinstance(m["depth_grid"], list) and m["depth_grid"] and all(_is_int(d) and d >= 1 for d in m["depth_grid"]),
             "model.depth_grid", "must be a non-empty list of positive integers")
    _require(_is_int(m["n_estimators"]) and m["n_estimators"] >= 1, "model.n_estimators", "must be >= 1")
    _require(_is_int(m["cv_folds"]) and m["cv_folds"] >= 2, "model.cv_folds", "must be >= 2")

    p = c["prior"]
    _require(_num(p["delta"]) and 0 <= p["delta"] <= 1, "prior.delta", "must lie in [0, 1]")
    _require(_num(p["depth_alpha"]) and p["depth_alpha"] > 0, "prior.depth_alpha", "must be positive")
    _require(_num(p["depth_beta"]) and p["depth_beta"] > 0, "prior.depth_beta", "must be positive")
    _require(_num(p["mi_epsilon"]) and p["mi_epsilon"] >= 0, "prior.mi_epsilon", "must be >= 0")

    o = c["optimizer"]
    _require(_is_int(o["init_samples"]) and 1 <= o["init_samples"] <= c["budget"], "optimizer.init_samples",
             "must lie in 1..budget")
    _require(_is_int(o["candidates"]) and o["candidates"] >= 1, "optimizer.candidates", "must be >= 1")
    _require(o["prior_decay"] is None or (_num(o["prior_decay"]) and o["prior_decay"] >= 0),
             "optimizer.prior_decay", "must be null or >= 0")
    _require(_num(o["ei_jitter"]) and o["ei_jitter"] >= 0, "optimizer.ei_jitter", "must be >= 0")
    _require(_is_int(o["n_trees"]) and o["n_trees"] >= 1, "optimizer.n_trees", "must be >= 1")

    _require(isinstance(c["methods"], list) and c["methods"], "methods", "must be a non-empty list")
    for i, meth in enumerate(c["methods"]):
        _require(isinstance(meth, str), f"methods[{i}]", "must be a string")
        _require(meth in SEARCH_METHODS or meth in ABLATION_METHODS or _fixed_ok(meth), f"methods[{i}]",
                 f"unknown method {meth!r}")
    _require(isinstance(c["seeds"], list) and c["seeds"], "seeds", "must be a non-empty list")
    for i, s in enumerate(c["seeds"]):
        _require(_is_int(s) and s >= 0, f"seeds[{i}]", "must be a non-negative integer")
    _require(len(set(c["seeds"])) == len(c["seeds"]), "seeds", "contains duplicates")
    _require(c["ground_truth"] is None or isinstance(c["ground_truth"], str), "ground_truth",
             "must be null or a path")
    _require(isinstance(c["output_dir"], str), "output_dir", "must be a path string")


def _fixed_ok(method: str) -> bool:
    from .baselines import FixedSelection
    try:
        FixedSelection.parse(method)
    except ConfigError:
        return False
    return True


def from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>: configuration must be a JSON object")
    merged = _merge(DEFAULTS, raw, "")
    _validate(merged)
    return ExperimentConfig(merged)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration ({exc.strerror})") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    try:
        return from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def feature_names(ids) -> list[str]:
    return [FEATURES[i].name for i in ids]
