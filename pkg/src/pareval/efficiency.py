"""Runtime measurement and GPU-memory log ingestion."""
from __future__ import annotations

import csv
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path

GPU_POLICIES = ("mean_of_max", "max_of_max")


@dataclass(frozen=True)
class EfficiencyRecord:
    case_id: str
    runtime_seconds: float
    gpu_max_mb: float = 0.0
    failed: bool = False
    exit_status: int | None = 0

    def __post_init__(self):
        if self.runtime_seconds < 0 or self.gpu_max_mb < 0:
            raise ValueError(f"negative efficiency value in {self}")

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "runtime_seconds": self.runtime_seconds,
            "gpu_max_mb": self.gpu_max_mb,
            "failed": self.failed,
            "exit_status": self.exit_status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EfficiencyRecord:
        return cls(
            case_id=str(d["case_id"]),
            runtime_seconds=float(d["runtime_seconds"]),
            gpu_max_mb=float(d.get("gpu_max_mb") or 0.0),
            failed=bool(d.get("failed", False)),
            exit_status=d.get("exit_status", 0),
        )


class GpuLogError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def measure_command(argv: list[str], case_id: str, timeout: float | None = None) -> EfficiencyRecord:
    """Run ``argv`` once and record its wall-clock time.

    Spawn failures propagate as OSError. A command that exceeds ``timeout``
    is killed and recorded as failed with runtime equal to the ceiling.
    """
    start = time.perf_counter()
    proc = subprocess.Popen(argv, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    try:
        status = proc.wait(timeout=timeout)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait()
        return EfficiencyRecord(case_id, float(timeout), failed=True, exit_status=None)
    elapsed = time.perf_counter() - start
    return EfficiencyRecord(case_id, elapsed, failed=status != 0, exit_status=status)


def ingest_gpu_log(path: str | Path) -> float:
    """Peak ``used_mb`` in a ``timestamp,used_mb`` CSV; 0 for an empty log."""
    peak = 0.0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return 0.0
        if [h.strip() for h in header] != ["timestamp", "used_mb"]:
            raise GpuLogError(1, f"expected header 'timestamp,used_mb', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise GpuLogError(lineno, f"expected 2 fields, got {len(row)}")
            try:
                used = float(row[1])
            except ValueError:
                raise GpuLogError(lineno, f"used_mb is not a number: {row[1]!r}") from None
            if not used >= 0:
                raise GpuLogError(lineno, f"used_mb must be non-negative, got {row[1]!r}")
            peak = max(peak, used)
    return peak


def aggregate_efficiency(records: list[EfficiencyRecord], gpu_policy: str = "mean_of_max") -> tuple[float, float]:
    """Mean runtime and the GPU statistic selected by ``gpu_policy``."""
    if not records:
        raise ValueError("no efficiency records to aggregate")
    if gpu_policy not in GPU_POLICIES:
        raise ValueError(f"gpu policy must be one of {GPU_POLICIES}")
    runtime = sum(r.runtime_seconds for r in records) / len(records)
    gpus = [r.gpu_max_mb for r in records]
    gpu = sum(gpus) / len(gpus) if gpu_policy == "mean_of_max" else max(gpus)
    return runtime, gpu
