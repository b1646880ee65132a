import shutil

import numpy as np
import pytest

from delaybound import models, simulator as sim, trace_io as tio
from delaybound.errors import ConfigError, ReferenceDataError, TraceFormatError
from delaybound.estimator import EstimationResult, IoDelayTable
from delaybound.trace import MeasuredTrace


@pytest.fixture(scope="module")
def big_trace():
    flow = models.real_source_from_load(2048, 3, 0.8, 1e9, 0.96e9)
    arr = sim.generate_arrivals(sim.SourceConfig("real_source", 10_000), flow)
    rep = sim.simulate(arr, sim.ServerConfig(9e8, 4.2e-6, 0.96e9))
    # snap to the nanosecond grid the file format stores
    t = rep.trace
    return MeasuredTrace(t.packet_id, t.length, np.rint(t.arrival * 1e9) / 1e9,
                         np.rint(t.departure * 1e9) / 1e9)


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestTrace:
    def test_round_trip(self, big_trace, tmp_path):
        path = tmp_path / "trace.csv"
        tio.write_trace(big_trace, path)
        assert tio.read_trace(path) == big_trace
        tio.write_trace(tio.read_trace(path), tmp_path / "again.csv")
        assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()

    def test_header_only(self, tmp_path):
        tr = tio.read_trace(write(tmp_path, ",".join(tio.TRACE_HEADER) + "\n"))
        assert len(tr) == 0

    def test_comments_allowed(self, tmp_path):
        text = "# captured at port 3\npacket_id,length_bytes,arrival_ns,departure_ns\n" \
               "0,256,0,6476\n# gap\n1,256,100,8752\n"
        tr = tio.read_trace(write(tmp_path, text))
        assert len(tr) == 2
        assert tr.length[0] == 2048
        assert tr.departure[1] == pytest.approx(8.752e-6)

    def test_departure_before_arrival(self, tmp_path):
        text = "packet_id,length_bytes,arrival_ns,departure_ns\n0,256,0,6476\n1,256,9000,8000\n"
        with pytest.raises(TraceFormatError, match=r":3: departure_ns must exceed"):
            tio.read_trace(write(tmp_path, text))

    @pytest.mark.parametrize("row,rule", [
        ("1,256,-5,9000", "non-decreasing"),
        ("1,256,100,100", "departure_ns must exceed"),
        ("1,256,100,5000", "FIFO"),
        ("1,0,100,9000", "length_bytes must be positive"),
        ("1,256,100", "expected 4 fields"),
        ("1,256,1e3,9000", "integers"),
    ])
    def test_bad_rows(self, tmp_path, row, rule):
        text = f"packet_id,length_bytes,arrival_ns,departure_ns\n0,256,0,6476\n{row}\n"
        with pytest.raises(TraceFormatError, match=rule):
            tio.read_trace(write(tmp_path, text))

    def test_bad_header(self, tmp_path):
        with pytest.raises(TraceFormatError, match="header"):
            tio.read_trace(write(tmp_path, "id,len,a,d\n"))

    def test_partial_bytes_refused(self):
        tr = MeasuredTrace([0], [100.0], [0.0], [1e-6])
        with pytest.raises(TraceFormatError):
            tio.trace_to_text(tr)


class TestConfig:
    def test_units(self):
        cfg = tio.parse_config("l_bytes = 256\nR_mbps = 885.95\ne_us = 4.2\n"
                               "C_gbps = 1\nn = 3\nsource = real_source  # kind\n")
        assert cfg == {"l": 2048, "R": pytest.approx(885.95e6), "e": pytest.approx(4.2e-6),
                       "C": 1e9, "n": 3, "source": "real_source"}

    def test_lists(self):
        cfg = tio.parse_config("lengths_bytes = 256, 512\nloads = 0.2, 0.5\n")
        assert cfg["lengths"] == [2048, 4096]
        assert cfg["loads"] == [0.2, 0.5]

    def test_duplicate(self):
        with pytest.raises(ConfigError, match="repeats"):
            tio.parse_config("e_us = 4\ne_ns = 4000\n")

    def test_malformed(self):
        with pytest.raises(ConfigError, match=":2:"):
            tio.parse_config("n = 3\njust words\n")

    def test_units_need_numbers(self):
        with pytest.raises(ConfigError):
            tio.parse_config("R_gbps = fast\n")


class TestIoTable:
    def test_round_trip(self, tmp_path):
        table = IoDelayTable({(256, 0.2): 2.4e-6, (1500, 0.8): 3.6e-6})
        tio.write_io_table(table, tmp_path / "io.csv")
        back = tio.read_io_table(tmp_path / "io.csv")
        assert back.entries.keys() == table.entries.keys()
        for k, v in table.entries.items():
            assert back.entries[k] == pytest.approx(v, rel=1e-12)

    def test_empty(self, tmp_path):
        with pytest.raises(ConfigError):
            tio.read_io_table(write(tmp_path, ",".join(tio.IO_TABLE_HEADER) + "\n"))

    def test_default_values(self):
        t = tio.default_io_table()
        assert t.maximum(256) == pytest.approx(2.4e-6)
        assert t.maximum(512) == pytest.approx(2.4e-6)
        assert t.maximum(1500) == pytest.approx(3.6e-6)


class TestReference:
    def test_max_delay(self):
        ref = tio.load_reference("testbed")
        assert ref.max_delay[(512, 0.8, 5)] == pytest.approx(15.2e-6)
        assert ref.max_delay[(1500, 0.2, 3)] == pytest.approx(21.5e-6)
        assert ref.max_delay[(256, 0.5, 1)] == pytest.approx(12.0e-6)

    def test_service_params(self):
        ref = tio.load_reference()
        assert ref.service[256] == pytest.approx((885.95e6, 4.2e-6))
        assert ref.service[1500] == pytest.approx((941.21e6, 5.0e-6))

    def test_unknown(self):
        with pytest.raises(ReferenceDataError):
            tio.load_reference("elsewhere")

    def test_corruption_detected(self, tmp_path):
        src = tio._reference_root("testbed")
        dst = tmp_path / "copy"
        shutil.copytree(src, dst)
        assert tio.load_reference(root=dst).service
        with open(dst / "service.csv", "a", encoding="utf-8") as fh:
            fh.write("9000,999.0,1.0\n")
        with pytest.raises(ReferenceDataError, match="checksum"):
            tio.load_reference(root=dst)

    def test_missing_file(self, tmp_path):
        dst = tmp_path / "copy"
        shutil.copytree(tio._reference_root("testbed"), dst)
        (dst / "anchors.csv").unlink()
        with pytest.raises(ReferenceDataError, match="missing"):
            tio.load_reference(root=dst)


class TestReports:
    def test_estimation_report_parses_back(self, tmp_path):
        res = EstimationResult(9e8, 1.8e-6, 4.2e-6, 12, np.array([1e-6, 1.8e-6]),
                               1e9, 1e5, 2.4e-6)
        tio.write_estimation_report(res, tmp_path / "est.txt", tmp_path / "slack.csv")
        cfg = tio.read_config(tmp_path / "est.txt")
        assert cfg["R_hat"] == 9e8
        assert cfg["e_with_io"] == pytest.approx(4.2e-6)
        lines = (tmp_path / "slack.csv").read_text().splitlines()
        assert lines == ["packet_index,slack_ns", "0,1000.000", "1,1800.000"]

    def test_sweep_header_only(self, tmp_path):
        tio.write_sweep([], tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text() == ",".join(tio.SWEEP_HEADER) + "\n"
