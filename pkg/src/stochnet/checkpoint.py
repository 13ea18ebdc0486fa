"""Versioned text checkpoint format.

Layout::

    STOCHNET v1
    input <count> [grid <h> <w> <channels>]
    layers <L>
    layer <i> <kind> <units> dense <src,src,...>
    layer <i> <kind> <units> local dl <int> dr <int> grid <h> <w> image <0|1>
    params
    <w1> <w2> ... <bias>        # one row per unit, layers ascending
    end

Floats are written with repr (shortest round-trip form), so serializing
the same network twice produces byte-identical files.
"""

from __future__ import annotations

import os

import numpy as np

from .model import Dense, LayerSpec, Local, Network, NetworkSpec
from .units import parse_kind

__all__ = ["CheckpointError", "save_network", "load_network", "network_to_text"]

MAGIC = "STOCHNET v1"


class CheckpointError(Exception):
    pass


def _spec_lines(spec: NetworkSpec) -> list[str]:
    head = f"input {spec.input_count}"
    if spec.input_grid is not None:
        h, w, c = spec.input_grid
        head += f" grid {h} {w} {c}"
    lines = [MAGIC, head, f"layers {spec.layer_count}"]
    for i, layer in enumerate(spec.layers, start=1):
        conn = layer.conn
        if isinstance(conn, Dense):
            srcs = ",".join(str(s) for s in conn.from_layers)
            lines.append(f"layer {i} {layer.kind} {layer.unit_count} dense {srcs}")
        else:
            h, w = conn.grid
            lines.append(
                f"layer {i} {layer.kind} {layer.unit_count} local"
                f" dl {conn.depth_radius} dr {conn.spatial_radius}"
                f" grid {h} {w} image {int(conn.image_access)}")
    return lines


def network_to_text(net: Network) -> str:
    lines = _spec_lines(net.spec)
    lines.append("params")
    for l in range(1, net.spec.layer_count + 1):
        for u in range(net.spec.layer(l).unit_count):
            row = net.unit_params(l, u)
            lines.append(" ".join(repr(float(v)) for v in row))
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_network(net: Network, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write(network_to_text(net))
    os.replace(tmp, path)


def _parse_spec(lines: list[str]) -> tuple[NetworkSpec, int]:
    if not lines or lines[0].strip() != MAGIC:
        raise CheckpointError(f"bad checkpoint header, expected '{MAGIC}'")
    try:
        head = lines[1].split()
        if head[0] != "input":
            raise CheckpointError("expected 'input' line")
        input_count = int(head[1])
        input_grid = None
        if len(head) > 2:
            if head[2] != "grid":
                raise CheckpointError("malformed input line")
            input_grid = (int(head[3]), int(head[4]), int(head[5]))
        if lines[2].split()[0] != "layers":
            raise CheckpointError("expected 'layers' line")
        layer_count = int(lines[2].split()[1])

        layers = []
        for i in range(layer_count):
            tok = lines[3 + i].split()
            if tok[0] != "layer" or int(tok[1]) != i + 1:
                raise CheckpointError(f"expected layer {i + 1} line, got {lines[3 + i]!r}")
            kind = parse_kind(tok[2])
            units = int(tok[3])
            if tok[4] == "dense":
                conn = Dense(tuple(int(s) for s in tok[5].split(",")))
            elif tok[4] == "local":
                if tok[5] != "dl" or tok[7] != "dr" or tok[9] != "grid" or tok[12] != "image":
                    raise CheckpointError(f"malformed local connectivity: {lines[3 + i]!r}")
                conn = Local(
                    depth_radius=int(tok[6]),
                    spatial_radius=int(tok[8]),
                    grid=(int(tok[10]), int(tok[11])),
                    image_access=bool(int(tok[13])))
            else:
                raise CheckpointError(f"unknown connectivity {tok[4]!r}")
            layers.append(LayerSpec(kind, units, conn))
    except CheckpointError:
        raise
    except (IndexError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint spec block: {exc}") from exc
    return NetworkSpec(input_count, tuple(layers), input_grid), 3 + layer_count


def load_network(path: str) -> Network:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    spec, pos = _parse_spec(lines)
    if pos >= len(lines) or lines[pos] != "params":
        raise CheckpointError("expected 'params' section")
    net = Network(spec)
    pos += 1
    for l in range(1, spec.layer_count + 1):
        for u in range(spec.layer(l).unit_count):
            if pos >= len(lines):
                raise CheckpointError(f"missing parameter row for layer {l} unit {u}")
            try:
                row = np.array([float(v) for v in lines[pos].split()])
            except ValueError as exc:
                raise CheckpointError(f"bad float on line {pos + 1}: {exc}") from exc
            expected = net.unit_input_count(l, u) + 1
            if row.size != expected:
                raise CheckpointError(
                    f"layer {l} unit {u}: {row.size} parameters, expected {expected}")
            net.set_unit_params(l, u, row)
            pos += 1
    if pos >= len(lines) or lines[pos] != "end":
        raise CheckpointError("missing 'end' marker")
    return net
