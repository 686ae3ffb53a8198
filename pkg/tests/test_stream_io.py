import json

import numpy as np
import pytest

from lowrankstream import (
    MaskedSlice,
    MaskedVector,
    StreamFormatError,
    SynthMatrixConfig,
    SynthTensorConfig,
    gen_matrix_stream,
    gen_tensor_stream,
    read_triplet_stream,
    write_triplet_stream,
)
from lowrankstream import stream_io


def _write(tmp_path, name, text, desc):
    csv = tmp_path / name
    csv.write_text(text)
    (tmp_path / name).with_suffix(".json").write_text(json.dumps(desc))
    return csv


class TestMatrixParsing:
    def test_direct_parse(self, tmp_path):
        csv = _write(tmp_path, "s.csv", "t,index,value\n1,2,0.5\n1,4,1.0\n",
                     {"kind": "matrix", "P": 5})
        out = read_triplet_stream(csv)
        assert len(out) == 1
        (obs,) = out
        assert obs.t == 1
        # file is 1-based; memory is 0-based
        assert np.array_equal(obs.indices, [1, 3])
        assert np.array_equal(obs.values, [0.5, 1.0])

    def test_empty_file(self, tmp_path):
        csv = _write(tmp_path, "s.csv", "t,index,value\n",
                     {"kind": "matrix", "P": 5})
        assert read_triplet_stream(csv) == []

    def test_out_of_range_index_names_line(self, tmp_path):
        csv = _write(tmp_path, "s.csv", "t,index,value\n1,9,0.5\n",
                     {"kind": "matrix", "P": 5})
        with pytest.raises(StreamFormatError, match="line 2"):
            read_triplet_stream(csv)

    def test_non_monotone_t_names_line(self, tmp_path):
        csv = _write(tmp_path, "s.csv",
                     "t,index,value\n2,1,0.5\n1,1,0.5\n",
                     {"kind": "matrix", "P": 5})
        with pytest.raises(StreamFormatError, match="line 3"):
            read_triplet_stream(csv)

    def test_malformed_row_names_line(self, tmp_path):
        csv = _write(tmp_path, "s.csv", "t,index,value\n1,2\n",
                     {"kind": "matrix", "P": 5})
        with pytest.raises(StreamFormatError, match="line 2"):
            read_triplet_stream(csv)

    def test_bad_value_names_line(self, tmp_path):
        csv = _write(tmp_path, "s.csv", "t,index,value\n1,2,zap\n",
                     {"kind": "matrix", "P": 5})
        with pytest.raises(StreamFormatError, match="line 2"):
            read_triplet_stream(csv)

    def test_gaps_become_empty_observations(self, tmp_path):
        csv = _write(tmp_path, "s.csv",
                     "t,index,value\n1,1,0.5\n3,2,1.5\n",
                     {"kind": "matrix", "P": 5})
        out = read_triplet_stream(csv)
        assert [o.t for o in out] == [1, 2, 3]
        assert out[1].n_observed == 0

    def test_leading_gap(self, tmp_path):
        csv = _write(tmp_path, "s.csv", "t,index,value\n3,2,1.5\n",
                     {"kind": "matrix", "P": 5})
        out = read_triplet_stream(csv)
        assert [o.t for o in out] == [1, 2, 3]
        assert out[0].n_observed == 0 and out[2].n_observed == 1

    def test_duplicate_index_within_t(self, tmp_path):
        csv = _write(tmp_path, "s.csv",
                     "t,index,value\n1,2,0.5\n1,2,0.6\n",
                     {"kind": "matrix", "P": 5})
        with pytest.raises(StreamFormatError, match="line 3"):
            read_triplet_stream(csv)


class TestTensorParsing:
    def test_direct_parse(self, tmp_path):
        csv = _write(tmp_path, "s.csv", "t,m,n,value\n1,1,2,0.5\n1,2,1,1.5\n",
                     {"kind": "tensor", "M": 2, "N": 2})
        (slc,) = read_triplet_stream(csv)
        assert isinstance(slc, MaskedSlice)
        assert np.array_equal(slc.rows, [0, 1])
        assert np.array_equal(slc.cols, [1, 0])

    def test_out_of_range_cell(self, tmp_path):
        csv = _write(tmp_path, "s.csv", "t,m,n,value\n1,3,1,0.5\n",
                     {"kind": "tensor", "M": 2, "N": 2})
        with pytest.raises(StreamFormatError, match="line 2"):
            read_triplet_stream(csv)


class TestRoundTrip:
    def test_matrix_round_trip_bytes(self, tmp_path):
        cfg = SynthMatrixConfig(P=12, r=2, sigma=0.3, pi=0.6, seed=8)
        obs = [o for o, _ in gen_matrix_stream(cfg, 15)]
        first = tmp_path / "a.csv"
        write_triplet_stream(obs, first)
        second = tmp_path / "b.csv"
        write_triplet_stream(read_triplet_stream(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_tensor_round_trip_bytes(self, tmp_path):
        cfg = SynthTensorConfig(M=4, N=3, R=2, sigma=0.1, pi=0.7, seed=8)
        obs = [s for s, _ in gen_tensor_stream(cfg, 10)]
        first = tmp_path / "a.csv"
        write_triplet_stream(obs, first)
        second = tmp_path / "b.csv"
        write_triplet_stream(read_triplet_stream(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_values_survive_round_trip_exactly(self, tmp_path):
        vals = np.array([1 / 3, np.pi, 1e-17, 123456.789012345678])
        obs = [MaskedVector(1, [0, 1, 2, 3], vals, 4)]
        path = tmp_path / "v.csv"
        write_triplet_stream(obs, path)
        (back,) = read_triplet_stream(path)
        assert np.array_equal(back.values, vals)

    def test_truth_files_round_trip(self, tmp_path):
        cfg = SynthMatrixConfig(P=6, r=2, sigma=0.0, pi=1.0, seed=1)
        truth = [(o.t, x) for o, x in gen_matrix_stream(cfg, 5)]
        path = tmp_path / "truth.csv"
        stream_io.write_matrix_truth(truth, path)
        back = stream_io.read_matrix_truth(path)
        for t, x in truth:
            assert np.array_equal(back[t], x)

    def test_tensor_truth_round_trip(self, tmp_path):
        cfg = SynthTensorConfig(M=3, N=2, R=1, sigma=0.0, pi=1.0, seed=1)
        truth = [(s.t, X) for s, X in gen_tensor_stream(cfg, 4)]
        path = tmp_path / "truth.csv"
        stream_io.write_tensor_truth(truth, path)
        back = stream_io.read_tensor_truth(path, (3, 2))
        for t, X in truth:
            assert np.array_equal(back[t], X)


class TestDescriptor:
    def test_unknown_kind_rejected(self, tmp_path):
        csv = _write(tmp_path, "s.csv", "t,index,value\n",
                     {"kind": "cube", "P": 5})
        with pytest.raises(StreamFormatError):
            read_triplet_stream(csv)

    def test_missing_field_rejected(self, tmp_path):
        csv = _write(tmp_path, "s.csv", "t,index,value\n", {"kind": "matrix"})
        with pytest.raises(StreamFormatError):
            read_triplet_stream(csv)
