import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from plgeodesics.curve import Covector, VertexField
from plgeodesics.documents import (
    CurveDocument,
    RunManifest,
    compute_hash,
    dump_document,
    from_value,
    load_document,
    parse_document,
    read_kernel_csv,
    read_trajectory_csv,
    render_frames,
    save_document,
    trajectory_columns,
    validate_document,
    validate_landmarks,
    write_kernel_csv,
    write_manifest,
    write_trajectory_csv,
)
from plgeodesics.dynamics import IntegratorConfig, LagrangianState, integrate_lagrangian
from plgeodesics.errors import SchemaError, ValidationError
from plgeodesics.generators import gen_diamond, random_polygon
from plgeodesics.metric import extended_cometric_matrix
from plgeodesics.srvt import random_stiefel_pair


def _payload(**overrides):
    payload = {
        "schema_version": 1,
        "grid": {"n": 3, "d": 2},
        "role": "polygon",
        "values": [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]],
        "flags": {"mean_zero": True},
    }
    payload.update(overrides)
    return payload


@pytest.fixture
def trajectory():
    c, v, _ = gen_diamond(0.0)
    return integrate_lagrangian(LagrangianState(c, v), IntegratorConfig(dt=0.1, t_end=0.5, sample_stride=2))


def test_round_trip_is_bit_exact(rng, tmp_path):
    c = random_polygon(rng, 7, 3)
    path = save_document(from_value(c, {"source": "test"}), tmp_path / "c.json")
    doc = load_document(path)
    assert doc.metadata == {"source": "test"}
    restored = validate_document(doc)
    assert restored.mean_zero
    assert_array_equal(restored.vertices, c.vertices)


def test_every_role_round_trips(rng):
    values = [
        VertexField.projected(rng.standard_normal((5, 2))),
        Covector(rng.standard_normal((5, 2))).restricted(),
        random_stiefel_pair(rng, 5),
    ]
    for value in values:
        doc = parse_document(json.loads(dump_document(from_value(value))))
        assert type(validate_document(doc)) is type(value)


@pytest.mark.parametrize(
    "overrides, path",
    [
        ({"schema_version": 2}, "schema_version"),
        ({"role": "surface"}, "role"),
        ({"values": [[1.0, 0.0], [0.0, 1.0]]}, "values"),
        ({"values": [[1.0, 0.0], [0.0, 1.0], [-1.0]]}, "values"),
        ({"values": [[1.0, 0.0], [0.0, float("nan")], [-1.0, -1.0]]}, "values.1.1"),
        ({"colour": "red"}, "colour"),
    ],
)
def test_schema_errors_name_the_field(overrides, path):
    with pytest.raises(SchemaError) as info:
        parse_document(_payload(**overrides))
    assert info.value.path == path


def test_missing_field():
    payload = _payload()
    del payload["role"]
    with pytest.raises(SchemaError) as info:
        parse_document(payload)
    assert info.value.path == "role"


def test_srv_pair_needs_two_columns():
    with pytest.raises(SchemaError):
        parse_document(_payload(role="srv_pair", grid={"n": 3, "d": 3}, values=[[1.0, 0.0, 0.0]] * 3))


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError) as info:
        load_document(path)
    assert info.value.path == "$"


@pytest.mark.parametrize(
    "overrides, invariant",
    [
        ({"values": [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]}, "mean_zero"),
        ({"role": "covector", "flags": {"sum_zero": True}, "values": [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]}, "sum_zero"),
        ({"role": "srv_pair", "flags": {}, "values": [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]}, "closedness"),
        ({"flags": {}, "values": [[1.0, 0.0], [1.0, 0.0], [-2.0, 0.0]]}, "immersion"),
        ({"grid": {"n": 3, "d": 1}, "flags": {}, "values": [[1.0], [0.0], [-1.0]]}, "shape"),
    ],
)
def test_validation_errors_name_the_invariant(overrides, invariant):
    with pytest.raises(ValidationError) as info:
        validate_document(parse_document(_payload(**overrides)))
    assert info.value.invariant == invariant


def test_validate_landmarks():
    q = validate_landmarks(parse_document(_payload()), sigma=0.5)
    assert q.n == 3
    assert q.sigma == 0.5

    repeated = _payload(grid={"n": 4, "d": 2}, values=[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]], flags={})
    with pytest.raises(ValidationError) as info:
        validate_landmarks(parse_document(repeated), sigma=1.0)
    assert info.value.invariant == "distinct"

    with pytest.raises(ValidationError) as info:
        validate_landmarks(parse_document(_payload(values=[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])), sigma=1.0)
    assert info.value.invariant == "mean_zero"

    with pytest.raises(ValidationError) as info:
        validate_landmarks(parse_document(_payload(role="covector", flags={})), sigma=1.0)
    assert info.value.invariant == "role"


def test_trajectory_columns(trajectory):
    columns = trajectory_columns(trajectory)
    assert columns[:3] == ["t", "c1_1", "c1_2"]
    assert columns[8] == "c4_2"
    assert columns[9:] == ["energy", "length", "min_edge", "vertex_sum", "momentum_sum_1", "momentum_sum_2"]


def test_trajectory_csv_round_trip(trajectory, tmp_path):
    path = write_trajectory_csv(trajectory, tmp_path / "traj.csv")
    times, positions = read_trajectory_csv(path)
    assert_array_equal(times, trajectory.times)
    assert_array_equal(positions, trajectory.positions)
    again = write_trajectory_csv(trajectory, tmp_path / "again.csv")
    assert path.read_bytes() == again.read_bytes()


def test_trajectory_csv_needs_time_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,c1_1\n0.0,1.0\n")
    with pytest.raises(SchemaError):
        read_trajectory_csv(path)


def test_kernel_csv_round_trip(rng, tmp_path):
    weights = extended_cometric_matrix(random_polygon(rng, 6)).weights
    path = write_kernel_csv(weights, tmp_path / "k.csv")
    assert_array_equal(read_kernel_csv(path), weights)
    assert len(path.read_text().splitlines()) == 6


def test_render_frames(trajectory, tmp_path):
    paths = render_frames(trajectory.times, trajectory.positions, tmp_path / "frames", workers=2)
    assert [p.name for p in paths] == [f"frame_{k:05d}.svg" for k in range(len(trajectory))]
    first = paths[0].read_text()
    assert first.count("<polyline") == 1
    assert first.startswith("<svg")
    repeat = render_frames(trajectory.times, trajectory.positions, tmp_path / "repeat")
    assert all(a.read_bytes() == b.read_bytes() for a, b in zip(paths, repeat))


def test_manifest(tmp_path):
    source = tmp_path / "input.txt"
    source.write_bytes(b"abc")
    digest = compute_hash(source)
    assert digest == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    manifest = RunManifest(command="exp", input_hashes={str(source): digest}, tool_version="0.1.0", exit_code=3)
    path = write_manifest(manifest, tmp_path / "out" / "run_manifest.json")
    written = json.loads(path.read_text())
    assert written["exit_code"] == 3
    assert written["abort_reason"] is None
    assert RunManifest.model_validate(written) == manifest


def test_document_defaults():
    doc = CurveDocument(grid={"n": 2, "d": 2}, role="tangent", values=[[1.0, 0.0], [-1.0, 0.0]])
    assert doc.schema_version == 1
    assert not doc.flags.mean_zero
    assert doc.metadata == {}
