import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from libblank.ir import SchemaError
from libblank.metrics import (CSV_COLUMNS, benchmark_row, compute_cve_exposure, compute_exposed,
                              compute_gadget_reduction, compute_reduction, load_cve_list,
                              report_csv, report_json, surface_metrics)
from libblank.runtime import Blank, Copy, Hit, Kind, Mispredict

from conftest import lib_fn
from libblank.ir import Program


def test_hand_values():
    assert compute_exposed(2, 3, 4) == 9
    assert compute_reduction(300, 9) == 97
    exposed, red = compute_cve_exposure(0, 1, [5], 47)
    assert exposed == 2 and red == Fraction(4500, 47)


def test_gadget_reduction_counts_library_only():
    fns = [lib_fn(i, f"g{i}", gadget_count=50) for i in range(3)]
    p = Program.of(fns)
    assert compute_gadget_reduction(p, [0]) == Fraction(200, 3)
    assert compute_gadget_reduction(p, []) == 100
    p2 = Program.of([lib_fn(0, "a", gadget_count=147), lib_fn(1, "b", gadget_count=3)])
    assert compute_gadget_reduction(p2, [1]) == 98
    assert compute_gadget_reduction(Program.of([lib_fn(0, "z")]), [0]) == 100


@pytest.mark.parametrize("args", [(-1, 0, 0), (0, 1.5, 0), (0, 0, None)])
def test_exposed_rejects_bad_counts(args):
    with pytest.raises(ValueError):
        compute_exposed(*args)


def test_reduction_errors():
    with pytest.raises(ValueError):
        compute_reduction(0, 0)
    with pytest.raises(ValueError):
        compute_reduction(10, 11)
    with pytest.raises(ValueError):
        compute_cve_exposure(0, 0, [], 0)
    with pytest.raises(ValueError):
        compute_cve_exposure(2, 0, [1], 2)


@given(st.integers(1, 500), st.integers(0, 500), st.integers(0, 500))
def test_reduction_monotone_in_exposure(total, a, b):
    a, b = sorted((min(a, total), min(b, total)))
    assert compute_reduction(total, a) >= compute_reduction(total, b)
    assert 0 <= compute_reduction(total, b) <= 100


def test_surface_metrics_from_log(malloc_program):
    log = [Copy(10), Copy(11), Hit(10), Hit(11), Blank((10, 11)), Copy(12),
           Mispredict(12, 2, Kind.UNDER)]
    m = surface_metrics(malloc_program, log, ["mmap64", "free", "strcpy"])
    assert (m.p_count, m.s_count, m.c_max, m.exposed) == (0, 1, 2, 3)
    assert m.total_functions == 4 and m.reduction_percent == 25
    assert m.exposed_gadgets == 15 and m.total_gadgets == 17
    assert m.cve_exposed == 2 and m.cve_reduction_percent == Fraction(100, 3)
    assert surface_metrics(malloc_program, log).cve_exposed is None
    assert m.to_json()["cve_reduction_percent"] == 33.3333


def test_cve_list_loader():
    assert load_cve_list('["a","b"]') == ["a", "b"]
    with pytest.raises(SchemaError):
        load_cve_list('{"a": 1}')


def test_report_rows_sorted_and_csv(malloc_program):
    m = surface_metrics(malloc_program, [Copy(10)], ["free"])
    sim = {k: 0 for k in ("accuracy", "calls", "hits", "underpredictions", "overpredictions",
                          "max_exposed_functions", "max_exposed_gadgets", "faults",
                          "attacks_detected", "audit_count", "audit_latency_geomean_us",
                          "invariant_violations")}
    sim.update(breakdown={}, audits={}, mode="set", lazy_blanking=True, accuracy=100.0)
    rows = [benchmark_row("b", m, sim), benchmark_row("a", m, sim)]
    doc = json.loads(report_json(rows))
    assert [r["benchmark"] for r in doc["benchmarks"]] == ["a", "b"]
    lines = report_csv(rows).splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1].startswith("a,50.0,")
