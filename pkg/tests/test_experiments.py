import math

import pytest

from surround_reid.errors import ConfigError
from surround_reid.experiments import (
    N_SWEEP,
    STUDIES,
    StudyRow,
    bootstrap_ci,
    run_study,
    table1_variants,
    table2_variants,
    table3_variants,
    worker_count,
)
from surround_reid.pipeline import PipelineConfig


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("SURROUND_REID_THREADS", "2")
    assert worker_count(8) == 2
    monkeypatch.setenv("SURROUND_REID_THREADS", "0")
    assert worker_count(8) == 1
    monkeypatch.setenv("SURROUND_REID_THREADS", "x")
    with pytest.raises(ConfigError):
        worker_count(8)
    monkeypatch.delenv("SURROUND_REID_THREADS")
    assert worker_count(3) == 3


def test_bootstrap_interval_contains_mean_and_is_reproducible():
    values = [0.9, 0.95, 0.91, 0.97, 0.93, 0.99, 0.92]
    lo, hi = bootstrap_ci(values)
    assert lo < sum(values) / len(values) < hi
    assert bootstrap_ci(values) == (lo, hi)
    assert bootstrap_ci([0.5, 0.5]) == (0.5, 0.5)


def test_study_row_prefers_pooled_point():
    assert StudyRow("v", "ic", [0.2, 0.4]).mean == pytest.approx(0.3)
    assert StudyRow("v", "match_accuracy", [0.2, 0.4], point=0.9).mean == 0.9


def test_variants():
    base = PipelineConfig()
    assert [v.name for v in table1_variants(base)] == ["Default", "IoU_T/C_T", "IoU_R/C_R"]
    assert [v.cfg.quality.n_occl for v in table2_variants(base)] == list(N_SWEEP)
    t3 = table3_variants(base)
    assert [v.name for v in t3] == ["feature", "feature+gate", "feature+gate+s2"]
    assert [(v.cfg.mct.use_gate, v.cfg.mct.weights.beta > 0) for v in t3] == [(False, False), (True, False), (True, True)]
    assert set(STUDIES) == {"table1", "table2", "table3"}


def test_unknown_study():
    with pytest.raises(KeyError):
        run_study("table4", [0])


def test_parallel_and_serial_agree(monkeypatch):
    monkeypatch.delenv("SURROUND_REID_THREADS", raising=False)
    serial = run_study("table1", [0, 1], workers=1)
    parallel = run_study("table1", [0, 1], workers=2)
    for a, b in zip(serial.rows, parallel.rows):
        assert a.values == b.values and a.extra == b.extra
        assert not math.isnan(a.ci_low)
