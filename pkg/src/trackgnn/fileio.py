"""Graph, weight and score files.

Graph file (comma-separated, two sections)::

    [nodes]
    node_id,layer,f0,f1,f2
    0,B1,12,-40,7
    [edges]
    edge_id,sender,receiver,f0,f1,f2,f3
    0,0,5,3,0,-1,9

Features are raw Q7.7 words.  Ids must run 0, 1, 2, ... in file order.
The header rows fix the feature widths, so an empty graph keeps them.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import fxp
from .errors import ParseError
from .geom import HitGraph, LayerId
from .inet import MLP, Dense, ModelParams

WEIGHTS_FORMAT = "trackgnn-weights"
WEIGHTS_VERSION = 1
MLP_KEYS = ("edge", "node", "classifier")


# -- graphs --------------------------------------------------------------------

def dump_graph(g: HitGraph) -> str:
    """Canonical text of a graph."""
    lines = ["[nodes]", ",".join(["node_id", "layer", *(f"f{k}" for k in range(g.d_node))])]
    for i in range(g.n_nodes):
        row = [str(i), LayerId(int(g.node_layers[i])).name]
        lines.append(",".join(row + [str(int(v)) for v in g.node_features[i]]))
    lines.append("[edges]")
    lines.append(",".join(["edge_id", "sender", "receiver",
                           *(f"f{k}" for k in range(g.d_edge))]))
    for e in range(g.n_edges):
        row = [str(e), str(int(g.senders[e])), str(int(g.receivers[e]))]
        lines.append(",".join(row + [str(int(v)) for v in g.edge_features[e]]))
    return "\n".join(lines) + "\n"


def save_graph(g: HitGraph, path) -> None:
    Path(path).write_text(dump_graph(g), encoding="ascii", newline="\n")


def _fields(line: str):
    """Split a row into ``(column, text)`` pairs, columns 1-based."""
    out, col = [], 1
    for text in line.split(","):
        out.append((col, text))
        col += len(text) + 1
    return out


def _int(text: str, lineno: int, col: int, what: str, path) -> int:
    s = text.strip()
    try:
        return int(s, 10)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got {text!r}", lineno, col, path) from None


def _header(line, lineno, fixed, path):
    cols = [t.strip() for _, t in _fields(line)]
    n_fixed = len(fixed)
    feats = cols[n_fixed:]
    if cols[:n_fixed] != list(fixed) or feats != [f"f{k}" for k in range(len(feats))]:
        want = ",".join([*fixed, "f0", "..."])
        raise ParseError(f"expected header {want!r}, got {line!r}", lineno, 1, path)
    return len(feats)


def parse_graph(text: str, path=None) -> HitGraph:
    lines = text.splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines):
            pos += 1
            raw = lines[pos - 1]
            if raw.strip() and not raw.lstrip().startswith("#"):
                return pos, raw
        return None, None

    def expect(tag):
        lineno, raw = next_line()
        if raw is None or raw.strip() != tag:
            raise ParseError(f"expected section {tag}", lineno or len(lines) + 1, 1, path)

    expect("[nodes]")
    lineno, raw = next_line()
    if raw is None:
        raise ParseError("missing node header", len(lines) + 1, 1, path)
    d_node = _header(raw, lineno, ("node_id", "layer"), path)
    layers, nfeat = [], []
    while True:
        lineno, raw = next_line()
        if raw is None:
            raise ParseError("missing [edges] section", len(lines) + 1, 1, path)
        if raw.strip() == "[edges]":
            break
        f = _fields(raw)
        if len(f) != 2 + d_node:
            raise ParseError(f"expected {2 + d_node} fields, got {len(f)}", lineno, 1, path)
        nid = _int(f[0][1], lineno, f[0][0], "node_id", path)
        if nid != len(layers):
            raise ParseError(f"node_id {nid} out of sequence, expected {len(layers)}",
                             lineno, f[0][0], path)
        try:
            layers.append(int(LayerId.parse(f[1][1].strip())))
        except (KeyError, ValueError):
            raise ParseError(f"unknown layer label {f[1][1]!r}", lineno, f[1][0],
                             path) from None
        nfeat.append(_raw_row(f[2:], lineno, path))
    lineno, raw = next_line()
    if raw is None:
        raise ParseError("missing edge header", len(lines) + 1, 1, path)
    d_edge = _header(raw, lineno, ("edge_id", "sender", "receiver"), path)
    n = len(layers)
    snd, rcv, efeat = [], [], []
    while True:
        lineno, raw = next_line()
        if raw is None:
            break
        f = _fields(raw)
        if len(f) != 3 + d_edge:
            raise ParseError(f"expected {3 + d_edge} fields, got {len(f)}", lineno, 1, path)
        eid = _int(f[0][1], lineno, f[0][0], "edge_id", path)
        if eid != len(snd):
            raise ParseError(f"edge_id {eid} out of sequence, expected {len(snd)}",
                             lineno, f[0][0], path)
        ends = []
        for col, text in f[1:3]:
            v = _int(text, lineno, col, "node index", path)
            if not 0 <= v < n:
                raise ParseError(f"node index {v} out of range for {n} nodes", lineno, col,
                                 path)
            ends.append(v)
        snd.append(ends[0])
        rcv.append(ends[1])
        efeat.append(_raw_row(f[3:], lineno, path))
    return HitGraph(np.array(nfeat, np.int64).reshape(n, d_node), np.array(layers, np.int64),
                    np.array(efeat, np.int64).reshape(len(snd), d_edge),
                    np.array(snd, np.int64), np.array(rcv, np.int64))


def _raw_row(fields, lineno, path):
    out = []
    for col, text in fields:
        v = _int(text, lineno, col, "feature", path)
        if not fxp.RAW_MIN <= v <= fxp.RAW_MAX:
            raise ParseError(f"feature {v} outside the 14-bit range", lineno, col, path)
        out.append(v)
    return out


def load_graph(path) -> HitGraph:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except UnicodeDecodeError as e:
        raise ParseError(f"non-ASCII content: {e.reason}", path=path) from None
    return parse_graph(text, path)


# -- weights -------------------------------------------------------------------

def weights_to_dict(params: ModelParams) -> dict:
    doc = {"format": WEIGHTS_FORMAT, "version": WEIGHTS_VERSION,
           "d_node": params.d_node, "d_edge": params.d_edge}
    for key, mlp in params.mlps().items():
        doc[key] = [{
            "shape": list(layer.shape),
            "weight": layer.weight.tolist(),
            "bias": layer.bias.tolist(),
            "weight_raw": layer.weight_raw.tolist(),
            "bias_raw": layer.bias_raw.tolist(),
        } for layer in mlp]
    return doc


def dump_weights(params: ModelParams) -> str:
    return json.dumps(weights_to_dict(params), indent=1) + "\n"


def save_weights(params: ModelParams, path) -> None:
    Path(path).write_text(dump_weights(params), encoding="utf-8", newline="\n")


def weights_from_dict(doc, path=None) -> ModelParams:
    def fail(msg):
        raise ParseError(msg, path=path)

    if not isinstance(doc, dict) or doc.get("format") != WEIGHTS_FORMAT:
        fail(f"not a {WEIGHTS_FORMAT} document")
    if doc.get("version") != WEIGHTS_VERSION:
        fail(f"unsupported version {doc.get('version')!r}")
    mlps = {}
    for key in MLP_KEYS:
        layers = doc.get(key)
        if not isinstance(layers, list) or not layers:
            fail(f"{key}: expected a non-empty list of layers")
        out = []
        for k, layer in enumerate(layers):
            where = f"{key}[{k}]"
            if not isinstance(layer, dict):
                fail(f"{where}: expected an object")
            try:
                if "weight" in layer:
                    w = np.array(layer["weight"], dtype=np.float64)
                    b = np.array(layer["bias"], dtype=np.float64)
                    if not (np.isfinite(w).all() and np.isfinite(b).all()):
                        fail(f"{where}: non-finite value")
                    dense = Dense(w, b, layer.get("weight_raw"), layer.get("bias_raw"))
                else:
                    wr = fxp.check_raw(np.array(layer["weight_raw"]), "weight_raw")
                    br = fxp.check_raw(np.array(layer["bias_raw"]), "bias_raw")
                    dense = Dense.from_raw(wr, br)
            except KeyError as e:
                fail(f"{where}: missing key {e.args[0]!r}")
            except (TypeError, ValueError) as e:
                fail(f"{where}: {e}")
            if "shape" in layer and list(layer["shape"]) != list(dense.shape):
                fail(f"{where}: shape {layer['shape']} does not match {list(dense.shape)}")
            out.append(dense)
        try:
            mlps[key] = MLP(out)
        except ValueError as e:
            fail(f"{key}: {e}")
    try:
        params = ModelParams(mlps["edge"], mlps["node"], mlps["classifier"])
    except ValueError as e:
        fail(str(e))
    for key in ("d_node", "d_edge"):
        if key in doc and doc[key] != getattr(params, key):
            fail(f"{key}={doc[key]} does not match the layer shapes")
    return params


def load_weights(path) -> ModelParams:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno, e.colno, path) from None
    return weights_from_dict(doc, path)


# -- scores and tables ---------------------------------------------------------

def dump_scores(g: HitGraph, scores: dict) -> str:
    """Per-edge scores; ``scores`` maps a mode name to an array of values."""
    modes = list(scores)
    head = ["edge_id", "sender", "receiver", *(f"score_{m}" for m in modes)]
    if len(modes) == 2:
        head.append("abs_diff")
    lines = [",".join(head)]
    for e in range(g.n_edges):
        vals = [float(scores[m][e]) for m in modes]
        row = [str(e), str(int(g.senders[e])), str(int(g.receivers[e]))]
        row += [f"{v:.9f}" for v in vals]
        if len(modes) == 2:
            row.append(f"{abs(vals[0] - vals[1]):.9f}")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def dump_rows(header, rows) -> str:
    out = [",".join(header)]
    out += [",".join(_cell(v) for v in row) for row in rows]
    return "\n".join(out) + "\n"


def _cell(v) -> str:
    if isinstance(v, float):
        if not math.isfinite(v):
            return str(v)
        return f"{v:.9f}".rstrip("0").rstrip(".") if v != int(v) else str(int(v))
    return str(v)


def dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"
