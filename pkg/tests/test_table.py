import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from isac_slp.harness.table import (
    FIELDS,
    ExperimentTable,
    TableFileError,
    emit_table,
    read_table,
    table_to_csv,
)

finite = st.floats(allow_nan=False, allow_infinity=False)
rows = st.lists(
    st.tuples(st.sampled_from(["proposed", "wosi", "wisi"]), finite,
              st.sampled_from(["pd_empirical", "pd_theory", "rmse_deg"]),
              st.floats(allow_nan=True), st.floats(allow_nan=True),
              st.integers(0, 10**6)),
    max_size=20,
    unique_by=lambda r: r[:3],
)


def _same(a, b):
    return a == b or (math.isnan(a) and math.isnan(b))


def _equal(t1, t2):
    r1, r2 = t1.rows(), t2.rows()
    assert len(r1) == len(r2)
    for x, y in zip(r1, r2):
        assert x[:3] == y[:3] and x.n == y.n
        assert _same(x.value, y.value) and _same(x.stderr, y.stderr)


@given(rows)
def test_round_trip(tmp_path_factory, data):
    table = ExperimentTable(data)
    d = tmp_path_factory.mktemp("tbl")
    for fmt in ("csv", "json"):
        path = d / f"t.{fmt}"
        emit_table(table, path, fmt)
        _equal(table, read_table(path))


def test_empty_table_has_header(tmp_path):
    path = tmp_path / "empty.csv"
    emit_table(ExperimentTable(), path)
    assert path.read_text() == ",".join(FIELDS) + "\n"
    assert len(read_table(path)) == 0


def test_rows_sorted_and_unique():
    t = ExperimentTable()
    t.add("wosi", 0.5, "pd_theory", 0.3)
    t.add("proposed", 0.1, "pd_theory", 0.2)
    t.add("proposed", 0.05, "pd_theory", 0.1)
    assert [(r.scheme, r.sweep_value) for r in t] == [
        ("proposed", 0.05), ("proposed", 0.1), ("wosi", 0.5)]
    with pytest.raises(KeyError):
        t.add("wosi", 0.5, "pd_theory", 0.4)


def test_csv_is_exact_and_lf():
    t = ExperimentTable([("proposed", 0.1, "pd_theory", 1 / 3, 0.0, 7)])
    text = table_to_csv(t)
    assert "\r" not in text
    assert text.splitlines()[1] == f"proposed,0.1,pd_theory,{1 / 3!r},0.0,7"


def test_nan_marker_sorts_last():
    t = ExperimentTable()
    t.add("*", math.nan, "failed", 2)
    t.add("*", 1.0, "x", 0)
    assert t.rows()[-1].metric == "failed"


def test_write_error(tmp_path):
    with pytest.raises(TableFileError):
        emit_table(ExperimentTable(), tmp_path / "missing" / "t.csv")
