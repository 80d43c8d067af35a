import json
import os

import numpy as np
import pytest

from fdivclass.io import atomic_write_text, config_hash, csv_text, derive_seed, substream, write_csv, write_json


class TestAtomicWrite:
    def test_creates_parent_and_writes(self, tmp_path):
        target = tmp_path / "a" / "b.txt"
        atomic_write_text(target, "hello")
        assert target.read_text() == "hello"

    def test_no_temp_left_behind(self, tmp_path):
        atomic_write_text(tmp_path / "x.csv", "1\n")
        assert os.listdir(tmp_path) == ["x.csv"]

    def test_failure_keeps_old_file(self, tmp_path, monkeypatch):
        target = tmp_path / "keep.txt"
        target.write_text("old")

        def boom(*_):
            raise OSError("disk full")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(OSError):
            atomic_write_text(target, "new")
        assert target.read_text() == "old"
        assert os.listdir(tmp_path) == ["keep.txt"]


class TestCsvJson:
    def test_float_repr_round_trips(self):
        text = csv_text(["a", "b"], [(0.1 + 0.2, np.int64(3))])
        assert text == "a,b\n0.30000000000000004,3\n"

    def test_write_json_sorted(self, tmp_path):
        write_json(tmp_path / "r.json", {"b": 1, "a": 2})
        assert list(json.loads((tmp_path / "r.json").read_text())) == ["a", "b"]

    def test_write_csv(self, tmp_path):
        write_csv(tmp_path / "r.csv", ["x"], [(1.5,)])
        assert (tmp_path / "r.csv").read_text() == "x\n1.5\n"


class TestHashAndSeeds:
    def test_hash_order_insensitive(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})

    def test_hash_sensitive(self):
        assert config_hash({"a": 1}) != config_hash({"a": 2})

    def test_substream_reproducible(self):
        a = substream(5, "train", "sl").normal(size=4)
        b = substream(5, "train", "sl").normal(size=4)
        np.testing.assert_array_equal(a, b)

    def test_substreams_independent(self):
        a = substream(5, "train").normal(size=4)
        b = substream(5, "test").normal(size=4)
        c = substream(6, "train").normal(size=4)
        assert not np.allclose(a, b) and not np.allclose(a, c)

    def test_derive_seed(self):
        assert derive_seed(1, "x") == derive_seed(1, "x")
        assert 0 <= derive_seed(1, "x") < 2**31
