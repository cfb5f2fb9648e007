import sys

import pytest

from pareval.efficiency import (
    EfficiencyRecord,
    GpuLogError,
    aggregate_efficiency,
    ingest_gpu_log,
    measure_command,
)


def test_sleep_two_seconds():
    rec = measure_command(["sleep", "2"], "PA000000")
    assert 2.0 <= rec.runtime_seconds <= 2.5
    assert not rec.failed and rec.exit_status == 0


def test_immediate_exit():
    rec = measure_command(["true"], "c")
    assert 0 <= rec.runtime_seconds < 0.5


def test_nonzero_exit_is_failed():
    rec = measure_command([sys.executable, "-c", "raise SystemExit(3)"], "c")
    assert rec.failed and rec.exit_status == 3


def test_missing_binary_raises():
    with pytest.raises(OSError):
        measure_command(["/nonexistent/definitely-not-here"], "c")


def test_timeout_records_ceiling():
    rec = measure_command(["sleep", "5"], "c", timeout=0.2)
    assert rec.failed and rec.runtime_seconds == 0.2 and rec.exit_status is None


def _log(tmp_path, text):
    p = tmp_path / "gpu.csv"
    p.write_text(text)
    return p


def test_gpu_log_peak(tmp_path):
    assert ingest_gpu_log(_log(tmp_path, "timestamp,used_mb\n0,1674\n1,1500\n2,1200\n")) == 1674


def test_gpu_log_empty(tmp_path):
    assert ingest_gpu_log(_log(tmp_path, "")) == 0
    assert ingest_gpu_log(_log(tmp_path, "timestamp,used_mb\n")) == 0


def test_gpu_log_bad_row(tmp_path):
    with pytest.raises(GpuLogError) as err:
        ingest_gpu_log(_log(tmp_path, "timestamp,used_mb\n0,10\nabc,xyz\n"))
    assert err.value.line == 3


def test_gpu_log_bad_header(tmp_path):
    with pytest.raises(GpuLogError):
        ingest_gpu_log(_log(tmp_path, "time,mem\n0,1\n"))


def test_aggregate_examples():
    recs = [EfficiencyRecord(str(i), float(t), 1674.0) for i, t in enumerate([1, 2, 3])]
    assert aggregate_efficiency(recs) == (2.0, 1674.0)
    one = [EfficiencyRecord("a", 7.92, 1674.0)]
    assert aggregate_efficiency(one) == (7.92, 1674.0)
    assert aggregate_efficiency(one, "max_of_max") == (7.92, 1674.0)


def test_aggregate_policies_differ():
    recs = [EfficiencyRecord("a", 1, 100), EfficiencyRecord("b", 1, 300)]
    assert aggregate_efficiency(recs, "mean_of_max")[1] == 200
    assert aggregate_efficiency(recs, "max_of_max")[1] == 300
    with pytest.raises(ValueError):
        aggregate_efficiency(recs, "median")
    with pytest.raises(ValueError):
        aggregate_efficiency([])


def test_record_round_trip_and_validation():
    r = EfficiencyRecord("a", 1.5, 20.0, True, None)
    assert EfficiencyRecord.from_dict(r.to_dict()) == r
    with pytest.raises(ValueError):
        EfficiencyRecord("a", -1.0)
