import json
import math
from fractions import Fraction

import pytest

from ness_radius.experiments import (
    CSV_COLUMNS,
    Degenerate,
    InfeasibleSweep,
    SweepRecord,
    SweepSpec,
    choose_value,
    linear_fit,
    records_from_csv,
    records_to_csv,
    results_to_json,
    run_cell,
    run_n0_table,
    run_radius_vs_delta,
    run_radius_vs_N,
    run_sweep,
    run_xx_check,
    table1_specs,
    verify_resolvent_vs_oracle,
)
from ness_radius.expansion import Mode
from ness_radius.operators import SystemParams

# radii from certified exact runs of this code, kept as regression fixtures
RADIUS_FIXTURES = {
    ("epsilon", 2): 2.0,
    ("epsilon", 3): 1.1118322920471573,
    ("epsilon", 4): 0.5610215849677682,
    ("mu", 3): 6.8053287944081005,
    ("mu", 4): 2.2932169358504075,
}


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("epsilon", [], [0], "1/2")
    with pytest.raises(ValueError):
        SweepSpec("epsilon", [2], [-1], "1/2")
    with pytest.raises(InfeasibleSweep):
        SweepSpec("epsilon", [6], ["1/2"], "1/2")
    SweepSpec("epsilon", [6], [0], "1/2")
    SweepSpec("epsilon", [6], ["1/2"], "1/2", allow_slow=True)


def test_linear_fit():
    f = linear_fit([(1, 3.0), (2, 5.0), (3, 7.0)])
    assert f.slope == pytest.approx(2) and f.intercept == pytest.approx(1) and f.r_squared == pytest.approx(1)
    flat = linear_fit([(2, math.log(2))] * 0 + [(N, math.log(2)) for N in (2, 3, 4)])
    assert flat.slope == pytest.approx(0, abs=1e-15)
    with pytest.raises(ValueError):
        linear_fit([(1, 1.0), (2, 2.0)])
    with pytest.raises(Degenerate):
        linear_fit([(2, 1.0), (2, 2.0), (2, 3.0)])


def test_cell_record_and_bookkeeping():
    spec = SweepSpec("epsilon", [3], ["1/2"], "1/2")
    rec = run_cell(SystemParams(3, "1/2", 1, "1/2"), "epsilon", spec)
    assert rec.n0 == 6
    assert rec.lam == pytest.approx(RADIUS_FIXTURES[("epsilon", 3)], rel=1e-12)
    assert rec.bookkeeping_ok()
    assert rec.wall_time_ms is None


def test_failed_cell_is_recorded():
    spec = SweepSpec("epsilon", [3], ["1/2"], "1/2", max_n=3)
    rec = run_cell(SystemParams(3, "1/2", 1, "1/2"), "epsilon", spec)
    assert not rec.ok and "NoDependenceFound" in rec.error
    assert records_to_csv([rec]).splitlines()[1].split(",")[5] == "N/A"


def test_csv_round_trip():
    spec = SweepSpec("mu", [2, 3], [1, "1/2"], 1, record_timing=True)
    records = run_sweep(spec, workers=1)
    text = records_to_csv(records)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    again = records_to_csv(records_from_csv(text))
    assert again == text
    assert any(math.isinf(r.lam) for r in records)  # N=2, delta=1 terminates


def test_sweep_is_order_independent():
    spec = SweepSpec("epsilon", [3, 2], [2, "1/2"], "1/2")
    a = records_to_csv(run_sweep(spec, workers=1))
    b = records_to_csv(run_sweep(spec, workers=2))
    assert a == b


def test_json_document():
    spec = SweepSpec("epsilon", [2], ["1/2"], "1/2")
    records = run_sweep(spec, workers=1)
    doc = json.loads(results_to_json(spec.as_dict(), records, precision="exact"))
    assert set(doc) >= {"schema_version", "spec", "records", "fits", "tool_version", "precision"}
    assert doc["records"][0]["n0"] == 2


def test_small_table():
    specs = table1_specs({"A": 3, "B": 4, "C": 3})
    result = run_n0_table(specs, workers=1)
    assert result.rows == {"A": {2: 2, 3: 6}, "B": {2: 2, 3: 4, 4: 6}, "C": {2: 2, 3: 4}}
    assert not result.mismatches
    assert "(B)" in result.format()


def test_n0_is_precision_independent():
    exact = run_n0_table(table1_specs({"A": 4, "B": 5, "C": 4}), workers=1)
    auto = run_n0_table(table1_specs({"A": 4, "B": 5, "C": 4}, precision="auto"), workers=1)
    assert exact.rows == auto.rows


def test_radius_vs_N():
    spec = SweepSpec("epsilon", [2, 3, 4], [0, "1/2", 10], "1/2")
    report = run_radius_vs_N(spec, workers=1)
    assert report.ok, [c for c in report.checks if not c.ok]
    assert report.fits["0"].slope == pytest.approx(0, abs=1e-12)
    assert report.fits["10"].slope < report.fits["1/2"].slope < 0
    lam = {r.N: r.lam for r in report.records if r.delta == Fraction(1, 2)}
    for N in (2, 3, 4):
        assert lam[N] == pytest.approx(RADIUS_FIXTURES[("epsilon", N)], rel=1e-12)


def test_radius_vs_delta():
    spec = SweepSpec("mu", [4], [Fraction(2) ** k for k in range(-4, 5, 2)], 1)
    report = run_radius_vs_delta(spec, workers=1)
    assert report.ok
    large = [r.lam for r in report.records if r.delta == 16][0]
    assert 1 < large <= 1.5
    assert report.slopes[4]["mean_slope_below_1"] < 0


def test_radius_vs_delta_flags_a_minimum():
    # at N=3 the radius has a minimum near delta=2 and grows again
    spec = SweepSpec("mu", [3], [1, 2, 4, 16], 1)
    report = run_radius_vs_delta(spec, workers=1)
    by_name = {c.name: c.ok for c in report.checks}
    assert by_name["N=3: lambda_mu > 1"]
    assert not by_name["N=3: lambda_mu non-increasing in delta"]


def test_xx_check():
    assert all(c.ok for c in run_xx_check([2, 3, 4]))


def test_choose_value():
    assert choose_value(Mode.EPSILON, 2.0, "half-radius") == 1
    assert choose_value(Mode.EPSILON, math.inf, "half-radius") == 1
    assert choose_value(Mode.MU, 6.8, "half-radius") == 1
    assert choose_value(Mode.MU, 6.8, "1/3") == Fraction(1, 3)


def test_verify_report():
    pts = [(SystemParams(3, "1/2", 1, "1/2"), "epsilon"), (SystemParams(3, 1, 1, 0), "mu"),
           (SystemParams(2, "1/2", 1, 0), "epsilon")]
    report = verify_resolvent_vs_oracle(pts, workers=1)
    assert report.passed, report.entries
    assert report.max_distance <= 1e-8
    eq = verify_resolvent_vs_oracle([(SystemParams(3, "1/2", 1, 0), "epsilon")], at="0.3", workers=1)
    assert eq.max_distance <= 1e-12


def test_verify_outside_radius_is_an_error():
    pts = [(SystemParams(3, "1/2", 1, "1/2"), "epsilon")]
    report = verify_resolvent_vs_oracle(pts, at="2", workers=1)
    assert not report.passed and "OutsideRadius" in report.entries[0].error


def test_small_delta_radius_at_five_sites():
    # measured regression: lambda shrinks with delta at N=5 but jumps to 2 at delta=0
    spec = SweepSpec("epsilon", [5], ["1/32", 0], "1/2")
    lam = {str(r.delta): r for r in run_sweep(spec, workers=1)}
    assert lam["1/32"].n0 == 98 and lam["1/32"].lam == pytest.approx(0.0282473868250339, rel=1e-10)
    assert lam["0"].n0 == 8 and lam["0"].lam == pytest.approx(2.0, rel=1e-12)
