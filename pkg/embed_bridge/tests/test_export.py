from __future__ import annotations

import json

import numpy as np
import pytest

from embed_bridge.export import export_file, read_dictionary_names


class TestReadDictionaryNames:
    def test_distinct_names_in_order(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("b\tX\na\tY\nb\tZ\n")
        assert read_dictionary_names(path) == ["b", "a"]

    def test_malformed_lines_skipped(self, tmp_path, caplog):
        path = tmp_path / "d.tsv"
        path.write_text("a\tX\nbroken-line\nb\tY\n")
        with caplog.at_level("WARNING"):
            names = read_dictionary_names(path)
        assert names == ["a", "b"]
        assert any("malformed" in r.getMessage() for r in caplog.records)

    def test_empty_dictionary_rejected(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("\n")
        with pytest.raises(ValueError):
            read_dictionary_names(path)


class TestExportFile:
    def test_fixture_dictionary_exports_one_line_per_name(
        self, tmp_path, encoder, primary_dictionary
    ):
        out = tmp_path / "emb.jsonl"
        written = export_file(primary_dictionary, out, encoder, batch_size=128)
        lines = out.read_text().splitlines()
        assert written == len(lines) == 1000

        dims = set()
        for line in lines:
            record = json.loads(line)
            vector = np.asarray(record["vector"])
            dims.add(vector.shape[0])
            assert abs(np.linalg.norm(vector) - 1.0) < 1e-4
        assert dims == {encoder.dim}

    def test_rerun_identical_bytes(self, tmp_path, encoder, primary_dictionary):
        first = tmp_path / "a.jsonl"
        second = tmp_path / "b.jsonl"
        export_file(primary_dictionary, first, encoder)
        export_file(primary_dictionary, second, encoder)
        assert first.read_bytes() == second.read_bytes()

    def test_batch_size_does_not_change_output(self, tmp_path, encoder, primary_dictionary):
        small = tmp_path / "small.jsonl"
        large = tmp_path / "large.jsonl"
        export_file(primary_dictionary, small, encoder, batch_size=7)
        export_file(primary_dictionary, large, encoder, batch_size=512)
        assert small.read_bytes() == large.read_bytes()
