import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ewround.graph import (
    DatasetConfig,
    GraphInstance,
    InstanceError,
    LabeledSample,
    SoftAssignment,
    application1_edge_weight,
    erdos_renyi,
    grid_graph,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    read_dataset,
    sample_dataset,
    save_instance,
    single_edge,
    toy_ground_truth_cost,
    write_dataset,
)


def test_single_edge_file(tmp_path):
    p = tmp_path / "g.json"
    p.write_text(json.dumps({"nodes": [{"attrs": [1.0]}, {"attrs": [2.0]}], "edges": [[0, 1]]}))
    inst = load_instance(p)
    assert inst.node_count == 2 and inst.edge_count == 1


def test_self_loop_rejected(tmp_path):
    p = tmp_path / "g.json"
    p.write_text(json.dumps({"nodes": [{"attrs": [1.0]}], "edges": [[0, 0]]}))
    with pytest.raises(InstanceError, match="self-loop"):
        load_instance(p)


@pytest.mark.parametrize(
    "edges, msg",
    [([[0, 2]], "out of range"), ([[0, 1], [1, 0]], "duplicate"), ([[0, 1, 2]], "pair")],
)
def test_invalid_edges(edges, msg):
    with pytest.raises(InstanceError, match=msg):
        instance_from_dict({"nodes": [{"attrs": [0]}, {"attrs": [0]}], "edges": edges})


def test_bad_json(tmp_path):
    p = tmp_path / "g.json"
    p.write_text("{nodes:")
    with pytest.raises(InstanceError, match="JSON"):
        load_instance(p)


def test_mixed_attr_dims_rejected():
    with pytest.raises(InstanceError, match="dimension"):
        instance_from_dict({"nodes": [{"attrs": [0]}, {"attrs": [0, 1]}], "edges": []})


def test_grid_4x4_reload(tmp_path):
    inst = grid_graph(4, 4)
    p = tmp_path / "grid.json"
    save_instance(inst, p)
    back = load_instance(p)
    # a rows x cols lattice has rows*(cols-1) + cols*(rows-1) edges
    assert back.node_count == 16 and back.edge_count == 4 * 3 + 4 * 3
    assert back == inst


def test_grid_edge_order():
    inst = grid_graph(2, 3)
    assert inst.edges == ((0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5))


@st.composite
def instances(draw, max_nodes=8):
    n = draw(st.integers(1, max_nodes))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True) if pairs else st.just([]))
    d = draw(st.integers(0, 3))
    attrs = draw(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=d, max_size=d), min_size=n, max_size=n))
    return GraphInstance(n, tuple(chosen), np.array(attrs, dtype=float).reshape(n, d))


@given(instances())
def test_roundtrip(inst):
    back = instance_from_dict(json.loads(json.dumps(instance_to_dict(inst))))
    assert back == inst
    assert instance_to_dict(back) == instance_to_dict(inst)


def test_instance_immutable():
    inst = grid_graph(2, 2)
    with pytest.raises(ValueError):
        inst.node_attrs[0, 0] = 5.0


def test_soft_assignment_bounds():
    SoftAssignment("node", [0.0, 1.0, 0.5])
    with pytest.raises(InstanceError):
        SoftAssignment("node", [1.2])
    with pytest.raises(InstanceError):
        SoftAssignment("both", [0.2])
    with pytest.raises(InstanceError, match="needs 1"):
        SoftAssignment("edge", [0.2, 0.3]).check_against(single_edge(0, 0))


def test_labeled_sample_invariants():
    with pytest.raises(InstanceError):
        LabeledSample((0, 2), 1.0)
    with pytest.raises(InstanceError):
        LabeledSample((0, 1), float("nan"))


def _toy_reference(c1, c2, x1, x2):
    # written out term by term from the ground-truth coefficients
    return (
        (580 - 10 * c1 - 3 * c2) / 33 * x1
        + (580 - 10 * c2 - 3 * c1) / 33 * x2
        + (3 * c1 + 3 * c2) / 45 * x1 * x2
        - (5 * c1 + 5 * c2) / 33
        + 60
    )


def test_toy_examples():
    assert toy_ground_truth_cost((0, 0), (0, 0)) == pytest.approx(60.0)
    assert toy_ground_truth_cost((33, 33), (0, 0)) == pytest.approx(50.0)
    assert toy_ground_truth_cost((33, 33), (1, 1)) == pytest.approx(50 + 2 * 151 / 33 + 198 / 45)
    assert toy_ground_truth_cost((33, 33), (1, 1)) == pytest.approx(63.552, abs=1e-3)


@given(st.floats(0, 60), st.floats(0, 60), st.integers(0, 1), st.integers(0, 1))
def test_toy_matches_reference_and_is_pure(c1, c2, x1, x2):
    a = toy_ground_truth_cost((c1, c2), (x1, x2))
    assert a == toy_ground_truth_cost((c1, c2), (x1, x2))
    assert a == pytest.approx(_toy_reference(c1, c2, x1, x2), rel=1e-12, abs=1e-9)


def test_application1_weights():
    assert application1_edge_weight("cover", 85, 85) == pytest.approx(170 / 3 + 72.25)
    assert application1_edge_weight("cover", 85, 85) == pytest.approx(128.917, abs=1e-3)
    assert application1_edge_weight("match", 87, 96) == 8352
    assert application1_edge_weight("cover", 0, 0) == 0
    with pytest.raises(ValueError):
        application1_edge_weight("other", 1, 2)


def test_sample_dataset_examples():
    assert sample_dataset(DatasetConfig("toy", 0), 1) == []
    cover = sample_dataset(DatasetConfig("cover", 5), 1)
    assert all(len(s.assignment) == 12 for _, s in cover)
    toy = sample_dataset(DatasetConfig("toy", 100), 7)
    assert len(toy) == 100
    with pytest.raises(ValueError, match="family"):
        sample_dataset(DatasetConfig("nope", 1), 0)


@pytest.mark.parametrize("family", ["toy", "cover", "match", "table"])
def test_dataset_determinism_bytes(tmp_path, family):
    a = write_dataset(sample_dataset(DatasetConfig(family, 30), 11), tmp_path / "a")
    b = write_dataset(sample_dataset(DatasetConfig(family, 30), 11), tmp_path / "b")
    for name in ("samples.csv", "instances.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    c = write_dataset(sample_dataset(DatasetConfig(family, 30), 12), tmp_path / "c")
    assert (a / "samples.csv").read_bytes() != (c / "samples.csv").read_bytes()


def test_dataset_labels_and_roundtrip(tmp_path):
    data = sample_dataset(DatasetConfig("match", 20), 3)
    for inst, s in data:
        z = inst.node_attrs[:, 0]
        expect = sum(z[u] * z[v] for (u, v), x in zip(inst.edges, s.assignment) if x)
        assert s.cost == pytest.approx(expect)
    back = read_dataset(write_dataset(data, tmp_path))
    assert [(i, s) for i, s in back] == data
    header = (tmp_path / "samples.csv").read_text().splitlines()[0]
    assert header == ",".join([f"x_{i}" for i in range(12)] + ["cost"])


def test_uniform_assignments():
    data = sample_dataset(DatasetConfig("cover", 2000), 5)
    X = np.array([s.assignment for _, s in data])
    assert abs(X.mean() - 0.5) < 0.02


def test_erdos_renyi_density():
    rng = np.random.default_rng(0)
    m = np.mean([erdos_renyi(20, 0.5, rng).edge_count for _ in range(50)])
    assert abs(m - 95) < 5
