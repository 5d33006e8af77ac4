import json

from phrasecritic.jsonio import dumps_canonical, read_json, write_json


def test_keys_are_sorted_and_output_ends_with_newline():
    text = dumps_canonical({"b": 1, "a": 2})
    assert text.index('"a"') < text.index('"b"')
    assert text.endswith("}\n")


def test_floats_round_trip_exactly():
    values = [0.1, 1e-17, 2.0 / 3.0, -5.0, 1234567.875]
    loaded = json.loads(dumps_canonical(values))
    assert loaded == values


def test_same_object_gives_identical_bytes():
    obj = {"x": [1, 2.5, "z"], "y": {"nested": True}}
    assert dumps_canonical(obj) == dumps_canonical(json.loads(
        dumps_canonical(obj)))


def test_write_then_read_round_trip(tmp_path):
    path = tmp_path / "obj.json"
    obj = {"name": "test", "values": [1.5, 2.25]}
    write_json(path, obj)
    assert read_json(path) == obj
    write_json(tmp_path / "again.json", read_json(path))
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()
