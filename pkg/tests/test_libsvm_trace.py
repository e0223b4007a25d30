import json
import math

import numpy as np
import pytest
import scipy.sparse as sp

from spdfp.exceptions import ParameterError, ParseError
from spdfp.libsvm import dump_libsvm, load_libsvm, write_sidecar
from spdfp.problems import Dataset
from spdfp.trace import TRACE_HEADER, IterationTrace, TraceRecord


def write(tmp_path, text, name="d.svm"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_single_row(tmp_path):
    d = load_libsvm(write(tmp_path, "+1 1:0.5 3:2.0\n"))
    assert d.labels.tolist() == [1.0]
    assert d.features.toarray().tolist() == [[0.5, 0.0, 2.0]]


def test_feature_count_is_max_index(tmp_path):
    d = load_libsvm(write(tmp_path, "-1 2:1\n+1 5:1\n"))
    assert d.q == 5 and d.m == 2


def test_bad_label(tmp_path):
    with pytest.raises(ParseError) as info:
        load_libsvm(write(tmp_path, "abc 1:1\n"))
    assert info.value.line == 1 and info.value.column == 1
    assert "line 1" in str(info.value)


@pytest.mark.parametrize("text,line,col", [
    ("+1 1:1\n-1 0:2\n", 2, 4),
    ("+1 1:1 1:2\n", 1, 8),
    ("+1 1:x\n", 1, 4),
    ("+1 12\n", 1, 4),
    ("+1 1:1\n\n-1 2:nan\n", 3, 4),
])
def test_malformed_lines(tmp_path, text, line, col):
    with pytest.raises(ParseError) as info:
        load_libsvm(write(tmp_path, text))
    assert (info.value.line, info.value.column) == (line, col)


def test_empty_file(tmp_path):
    with pytest.raises(ParseError):
        load_libsvm(write(tmp_path, "# nothing here\n\n"))


def test_comments_and_blank_lines(tmp_path):
    d = load_libsvm(write(tmp_path, "# header\n+1 1:1 # trailing\n\n-1 2:3\n"))
    assert d.m == 2 and d.features.toarray().tolist() == [[1.0, 0.0], [0.0, 3.0]]


def test_label_mapping(tmp_path):
    p = write(tmp_path, "0 1:1\n1 1:2\n")
    with pytest.warns(UserWarning):
        assert load_libsvm(p).labels.tolist() == [-1.0, 1.0]
    with pytest.raises(ParameterError):
        load_libsvm(p, map_labels=False)


def test_explicit_feature_count(tmp_path):
    p = write(tmp_path, "1 2:1\n")
    assert load_libsvm(p, n_features=4).q == 4
    with pytest.raises(ParameterError):
        load_libsvm(p, n_features=1)


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.integers(-4, 5, size=(12, 6)) / 4.0
    X[:, -1] = np.where(X[:, -1] == 0, 0.5, X[:, -1])  # keep q fixed
    data = Dataset(X, rng.standard_normal(12), task="regression")
    p = tmp_path / "rt.svm"
    dump_libsvm(p, data)
    back = load_libsvm(p, task="regression")
    np.testing.assert_array_equal(back.features.toarray(), X)
    np.testing.assert_array_equal(back.labels, data.labels)


def test_round_trip_sparse(tmp_path):
    X = sp.random(20, 9, density=0.3, random_state=1, format="lil")
    X[0, 8] = 1.0
    X = X.tocsr()
    data = Dataset(X, np.where(np.arange(20) % 2, 1.0, -1.0))
    dump_libsvm(tmp_path / "s.svm", data)
    back = load_libsvm(tmp_path / "s.svm")
    assert (back.features != X).nnz == 0


def test_sidecar(tmp_path):
    write_sidecar(tmp_path / "m.json", seed=3, ground_truth=np.array([1.0, 0.0]))
    assert json.loads((tmp_path / "m.json").read_text()) == {"seed": 3, "ground_truth": [1.0, 0.0]}


# traces


def test_trace_round_trip(tmp_path):
    tr = IterationTrace()
    tr.append(TraceRecord(1, 0.25, 3.5, 0.1, None, (0, 2)))
    tr.append(TraceRecord(2, 0.5, 1 / 3, None, 1e-9, None))
    tr.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER)
    assert lines[1] == '1,0.250000,3.5,0.1,,"0,2"'
    back = IterationTrace.from_csv(tmp_path / "t.csv")
    assert back.records[1].objective == 1 / 3
    assert back.records[0].active_set == (0, 2)
    assert back.records[1].fp_residual is None
    assert back.iterations == 2


def test_trace_header_only(tmp_path):
    IterationTrace().to_csv(tmp_path / "e.csv")
    back = IterationTrace.from_csv(tmp_path / "e.csv")
    assert len(back) == 0


@pytest.mark.parametrize("text", ["", "it,time\n1,2\n", ",".join(TRACE_HEADER) + "\n1,2\n",
                                  ",".join(TRACE_HEADER) + "\nx,0,1,,,\n"])
def test_trace_parse_errors(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ParseError):
        IterationTrace.from_csv(p)


def test_missing_objective_reads_as_nan(tmp_path):
    tr = IterationTrace([TraceRecord(1, 0.0)])
    tr.to_csv(tmp_path / "n.csv")
    assert math.isnan(IterationTrace.from_csv(tmp_path / "n.csv").records[0].objective)
