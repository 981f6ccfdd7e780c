import json

import numpy as np
import pytest
from conftest import random_graphs, tiny_graph

from trackgnn import fileio
from trackgnn.errors import ParseError
from trackgnn.geom import validate
from trackgnn.inet import InferConfig, infer, random_params
from trackgnn.synthetic import default_profile, generate_synthetic


def test_empty_graph_text():
    text = "[nodes]\nnode_id,layer,f0,f1,f2\n[edges]\nedge_id,sender,receiver,f0,f1,f2,f3\n"
    g = fileio.parse_graph(text)
    assert g.n_nodes == 0 and g.n_edges == 0 and (g.d_node, g.d_edge) == (3, 4)
    assert fileio.dump_graph(g) == text


def test_tiny_graph_text():
    text = fileio.dump_graph(tiny_graph())
    lines = text.splitlines()
    assert lines[:3] == ["[nodes]", "node_id,layer,f0,f1,f2", "0,B1,-7,-6,-5"]
    assert lines[7] == "[edges]"
    assert lines[9] == "0,0,1,-20,-17,-14,-11"


def test_round_trip_bytes(tmp_path):
    for k, g in enumerate(random_graphs(21, 10, 100, 100)):
        path = tmp_path / f"g{k}.csv"
        fileio.save_graph(g, path)
        before = path.read_bytes()
        h = fileio.load_graph(path)
        assert h.equals(g)
        fileio.save_graph(h, path)
        assert path.read_bytes() == before


def test_comments_and_blank_lines_ignored():
    text = fileio.dump_graph(tiny_graph()).replace("[edges]", "\n# edges follow\n[edges]")
    assert fileio.parse_graph(text).equals(tiny_graph())


def _bad(text, line, column=None):
    with pytest.raises(ParseError) as ei:
        fileio.parse_graph(text, "g.csv")
    assert ei.value.line == line
    if column is not None:
        assert ei.value.column == column
    assert f"line {line}" in str(ei.value)
    return ei.value


def test_index_out_of_range_has_line():
    lines = ["[nodes]", "node_id,layer,f0"] + [f"{i},B1,0" for i in range(10)]
    lines += ["[edges]", "edge_id,sender,receiver,f0", "0,0,999,0"]
    e = _bad("\n".join(lines) + "\n", 15, 5)
    assert "999" in str(e)


def test_parse_errors():
    good = fileio.dump_graph(tiny_graph()).splitlines()
    _bad("", 1)
    _bad("[edges]\n", 1)
    _bad("\n".join(good[:1] + ["id,layer,f0"]), 2)
    _bad("\n".join(good[:3] + ["1,B9,0,0,0"] + good[4:]), 4, 3)
    _bad("\n".join(good[:3] + ["5,B2,0,0,0"] + good[4:]), 4, 1)
    _bad("\n".join(good[:3] + ["1,B2,0,x,0"] + good[4:]), 4, 8)
    _bad("\n".join(good[:3] + ["1,B2,0,0"] + good[4:]), 4)
    _bad("\n".join(good[:3] + ["1,B2,0,0,9000"] + good[4:]), 4, 10)
    _bad("\n".join(good[:7]), 8)


def test_illegal_pairs_parse_but_do_not_validate():
    lines = fileio.dump_graph(tiny_graph()).splitlines()
    lines[-1] = "3,4,3,0,0,0,0"  # E2 -> E1 runs outward to inward
    g = fileio.parse_graph("\n".join(lines))
    assert [d.kind for d in validate(g)] == ["illegal-pair"]


def test_non_ascii_rejected(tmp_path):
    p = tmp_path / "g.csv"
    p.write_bytes("[nodes]\nnode_id,layer,f0\n0,B1,é\n".encode())
    with pytest.raises(ParseError):
        fileio.load_graph(p)


# -- weights -------------------------------------------------------------------

def test_weights_round_trip(tmp_path):
    p = random_params(InferConfig(), np.random.default_rng(0))
    path = tmp_path / "w.json"
    fileio.save_weights(p, path)
    q = fileio.load_weights(path)
    assert fileio.weights_to_dict(q) == fileio.weights_to_dict(p)
    g = generate_synthetic(1)
    assert np.array_equal(infer(g, p), infer(g, q))
    assert fileio.dump_weights(q) == path.read_text()


def test_weights_schema_fields():
    doc = fileio.weights_to_dict(random_params(InferConfig(), np.random.default_rng(1)))
    assert doc["format"] == "trackgnn-weights" and doc["version"] == 1
    assert (doc["d_node"], doc["d_edge"]) == (3, 4)
    assert [layer["shape"] for layer in doc["edge"]] == [[10, 8], [8, 8], [8, 4]]


def test_raw_only_weights():
    doc = fileio.weights_to_dict(random_params(InferConfig(), np.random.default_rng(2)))
    for key in fileio.MLP_KEYS:
        for layer in doc[key]:
            del layer["weight"], layer["bias"]
    p = fileio.weights_from_dict(doc)
    assert p.edge_mlp[0].weight_raw.tolist() == doc["edge"][0]["weight_raw"]


def _mutated(fn):
    doc = fileio.weights_to_dict(random_params(InferConfig(), np.random.default_rng(3)))
    fn(doc)
    return doc


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format="other"),
    lambda d: d.update(version=2),
    lambda d: d.update(edge=[]),
    lambda d: d["node"][0].update(shape=[1, 1]),
    lambda d: d["node"][0]["weight_raw"][0].__setitem__(0, 99999),
    lambda d: d["node"][0].pop("bias"),
    lambda d: d.update(d_node=5),
    lambda d: d["classifier"][0]["weight"][0].__setitem__(0, float("nan")),
])
def test_bad_weights(mutate):
    with pytest.raises(ParseError):
        fileio.weights_from_dict(_mutated(mutate))


def test_weights_json_error_has_position(tmp_path):
    p = tmp_path / "w.json"
    p.write_text('{"format": \n oops}')
    with pytest.raises(ParseError) as ei:
        fileio.load_weights(p)
    assert ei.value.line == 2


# -- other emitters ------------------------------------------------------------

def test_dump_scores():
    g = tiny_graph()
    text = fileio.dump_scores(g, {"fixed": np.array([0.5, 1, 0, 0.25]),
                                  "real": np.array([0.5, 0.9, 0, 0.25])})
    lines = text.splitlines()
    assert lines[0] == "edge_id,sender,receiver,score_fixed,score_real,abs_diff"
    assert lines[2] == "1,0,2,1.000000000,0.900000000,0.100000000"


def test_dump_rows_and_json():
    assert fileio.dump_rows(["a", "b"], [(1, 0.5), ("x", 2.0)]) == "a,b\n1,0.5\nx,2\n"
    assert json.loads(fileio.dump_json({"b": 1, "a": [1]})) == {"a": [1], "b": 1}
    assert fileio.dump_json({}).endswith("\n")


def test_synthetic_default_profile():
    g = generate_synthetic(0)
    assert (g.n_nodes, g.n_edges) == (739, 1252)
    assert generate_synthetic(0).equals(g) and validate(g) == []
    empty = generate_synthetic(0, default_profile(0, 0))
    assert (empty.n_nodes, empty.n_edges) == (0, 0)
