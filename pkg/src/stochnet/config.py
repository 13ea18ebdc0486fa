"""Run configuration: line-based ``key = value`` files with ``#`` comments
and ``[section]`` headers, plus ``--set section.key=value`` overrides.
Unknown sections or keys are rejected outright so a config file is a
faithful record of a run."""

from __future__ import annotations

import re

from .model import Dense, LayerSpec, Local, NetworkSpec
from .units import parse_kind

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_network_spec"]


class ConfigError(Exception):
    pass


# section -> key -> (type tag, default); layerN keys are pattern-matched
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "network": {
        "input": ("str", None),
        "init_scale": ("float", 0.1),
        # layer1..layerN handled by pattern
    },
    "train": {
        "mode": ("str", "ebp"),
        "step_size": ("float", 0.1),
        "iterations": ("int", 1000),
        "batch_size": ("int", 1),
        "seed": ("int", 0),
        "eval_period": ("int", 0),
        "eval_samples": ("int", 1000),
        "lb_samples": ("int", 8),
        "momentum": ("float", 0.0),
        "weight_decay": ("float", 0.0),
        "metric": ("str", "accuracy"),
    },
    "data": {
        "kind": ("str", "csv"),
        "path": ("str", ""),
        "label_count": ("int", 1),
        "header": ("bool", False),
        "blob_count": ("int", 100),
        "blob_height": ("int", 16),
        "blob_width": ("int", 16),
        "blob_seed": ("int", 0),
        "train_count": ("int", 0),
        "split_seed": ("int", 0),
    },
    "inference": {
        "samples": ("int", 100_000),
        "burn_in": ("int", 1000),
        "sweeps": ("int", 100_000),
        "thinning": ("int", 10),
        "seed": ("int", 0),
    },
    "segment": {
        "image": ("str", ""),
        "image_index": ("int", -1),
        "scribbles": ("str", ""),
        "mask": ("str", ""),
        "mode": ("str", "sampled"),
        "noise_sigmas": ("floats", ()),
        "blur_radii": ("floats", ()),
        "noise_seed": ("int", 0),
    },
    "oracle": {
        "nets": ("int", 5),
        "inputs": ("int", 2),
        "hidden": ("int", 3),
        "outputs": ("int", 2),
        "scale": ("float", 1.2),
        "seed": ("int", 0),
        "samples": ("int", 100_000),
        "tol": ("float", 0.005),
        "gibbs_burn_in": ("int", 200),
        "gibbs_sweeps": ("int", 20_000),
        "gibbs_thinning": ("int", 5),
        "gibbs_tol": ("float", 0.01),
    },
    "output": {
        "dir": ("str", "out"),
        "checkpoint": ("str", "model.ckpt"),
        "metrics": ("str", "metrics.csv"),
        "figures": ("bool", True),
    },
    "serve": {
        "host": ("str", "127.0.0.1"),
        "port": ("int", 8008),
        "model": ("str", ""),
        "burn_in": ("int", 200),
        "sweeps": ("int", 2000),
        "thinning": ("int", 5),
        "seed": ("int", 0),
        "image_dir": ("str", ""),
    },
}

_LAYER_KEY = re.compile(r"^layer(\d+)$")


def _coerce(section: str, key: str, raw: str):
    tag, _ = _SCHEMA[section][key]
    raw = raw.strip()
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if tag == "floats":
            if not raw:
                return ()
            return tuple(float(v) for v in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


class RunConfig:
    """Parsed config: values[section][key], layer lines kept in order."""

    def __init__(self):
        self.values: dict[str, dict[str, object]] = {
            s: {k: d for k, (_, d) in keys.items()} for s, keys in _SCHEMA.items()}
        self.layer_lines: list[str] = []

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, raw: str) -> None:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if section == "network" and _LAYER_KEY.match(key):
            index = int(_LAYER_KEY.match(key).group(1))
            while len(self.layer_lines) < index:
                self.layer_lines.append("")
            self.layer_lines[index - 1] = raw.strip()
            return
        if key not in _SCHEMA[section]:
            raise ConfigError(f"unknown key '{key}' in section [{section}]")
        self.values[section][key] = _coerce(section, key, raw)

    def network_spec(self) -> NetworkSpec:
        return parse_network_spec(self.values["network"]["input"], self.layer_lines)


def load_config(path: str, overrides: list[str] = ()) -> RunConfig:
    cfg = RunConfig()
    section = None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith("[") and text.endswith("]"):
            section = text[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"{path}:{lineno}: key before any [section]")
        key, raw = (part.strip() for part in text.split("=", 1))
        cfg.set(section, key, raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set needs section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"--set key must be section.key, got {dotted!r}")
        section, key = dotted.split(".", 1)
        cfg.set(section.strip(), key.strip(), raw)
    return cfg


def parse_network_spec(input_line: str | None, layer_lines: list[str]) -> NetworkSpec:
    """Grammar::

        input:  "<count>"  or  "image <h> <w> <channels>"
        layerN: "<kind> <units> dense <src,src,...>"
        layerN: "<kind> local grid <h>x<w> dl <int> dr <int> [image]"

    kinds: sigmoid | tanh | relusum<K> | delta.  Layer ids count from 1
    with 0 meaning the input."""
    if not input_line:
        raise ConfigError("[network] input is required")
    tokens = str(input_line).split()
    input_grid = None
    if tokens[0] == "image":
        if len(tokens) != 4:
            raise ConfigError("input image form: 'image <h> <w> <channels>'")
        h, w, c = (int(t) for t in tokens[1:])
        input_grid = (h, w, c)
        input_count = h * w * c
    else:
        if len(tokens) != 1:
            raise ConfigError(f"malformed input line: {input_line!r}")
        input_count = int(tokens[0])

    layers = []
    for i, line in enumerate(layer_lines, start=1):
        if not line:
            raise ConfigError(f"layer{i} is missing")
        try:
            layers.append(_parse_layer(line))
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"layer{i}: {exc} (line: {line!r})") from exc
    if not layers:
        raise ConfigError("[network] needs at least one layerN line")
    return NetworkSpec(input_count, tuple(layers), input_grid)


def _parse_layer(line: str) -> LayerSpec:
    tokens = line.split()
    kind = parse_kind(tokens[0])
    if tokens[1] == "local":
        opts = tokens[2:]
        grid = dl = dr = None
        image = False
        i = 0
        while i < len(opts):
            if opts[i] == "grid":
                h, w = opts[i + 1].split("x")
                grid = (int(h), int(w))
                i += 2
            elif opts[i] == "dl":
                dl = int(opts[i + 1])
                i += 2
            elif opts[i] == "dr":
                dr = int(opts[i + 1])
                i += 2
            elif opts[i] == "image":
                image = True
                i += 1
            else:
                raise ValueError(f"unknown local option {opts[i]!r}")
        if grid is None or dl is None or dr is None:
            raise ValueError("local layers need grid, dl, and dr")
        return LayerSpec(kind, grid[0] * grid[1],
                         Local(dl, dr, grid, image_access=image))
    units = int(tokens[1])
    if tokens[2] != "dense":
        raise ValueError(f"expected 'dense' or 'local', got {tokens[2]!r}")
    sources = tuple(int(s) for s in tokens[3].split(","))
    return LayerSpec(kind, units, Dense(sources))
