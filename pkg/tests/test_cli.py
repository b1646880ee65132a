import json

import pytest

from delaybound import cli, trace_io

SOURCE_CFG = """\
l_bytes = 256
n = 3
load = 0.8
C_gbps = 1
r_p_gbps = 0.96
total_packets = 10000
R_gbps = 0.9
e_us = 4.2
p_in_gbps = 0.96
"""

FLOW_CFG = """\
# testbed server for 256 B packets
l_bytes = 256
R_mbps = 885.95
e_us = 4.20
r_gbps = 0.5
b_bytes = 768
p_gbps = 1
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "src.cfg").write_text(SOURCE_CFG)
    (tmp_path / "flow.cfg").write_text(FLOW_CFG)
    return tmp_path


def run(*argv):
    return cli.main(list(argv))


class TestPipeline:
    def test_gen_sim_estimate(self, workdir):
        assert run("gen", "--config", "src.cfg", "--out", "arr.csv") == 0
        assert run("sim", "--config", "src.cfg", "--arrivals", "arr.csv",
                   "--out", "trace.csv", "--report", "delays.csv") == 0
        assert run("estimate", "--trace", "trace.csv", "--C-bps", "1e9",
                   "--jitter-floor-ns", "1", "--out", "est.txt",
                   "--slack-out", "slack.csv", "--length-bytes", "256") == 0
        rep = trace_io.read_config(workdir / "est.txt")
        assert rep["R_hat"] == pytest.approx(9e8, rel=0.01)
        assert rep["e_hat"] == pytest.approx(4.2e-6, abs=0.1e-6)
        assert rep["e_with_io"] == pytest.approx(rep["e_hat"] + 2.4e-6)
        for name in ("arr.csv", "trace.csv", "est.txt"):
            assert (workdir / f"{name}.manifest.json").exists()
        header = (workdir / "delays.csv").read_text().splitlines()[0]
        assert header == "packet_id,delay_ns,queue_ns,proc_ns,trans_ns"

    def test_sim_from_config(self, workdir):
        assert run("sim", "--config", "src.cfg", "--out", "t.csv") == 0
        assert len(trace_io.read_trace(workdir / "t.csv")) == 10_000

    def test_reproducible(self, workdir):
        for out in ("a.csv", "b.csv"):
            assert run("gen", "--config", "src.cfg", "--out", "arr.csv") == 0
            assert run("sim", "--config", "src.cfg", "--arrivals", "arr.csv",
                       "--seed", "4", "--out", out) == 0
        assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()
        ma = json.loads((workdir / "a.csv.manifest.json").read_text())
        mb = json.loads((workdir / "b.csv.manifest.json").read_text())
        assert ma["config"] == mb["config"] and ma["seed"] == 4


class TestBound:
    def test_all_models(self, workdir, capsys):
        assert run("bound", "--config", "flow.cfg", "--model", "all", "--out", "b.csv") == 0
        rows = (workdir / "b.csv").read_text().splitlines()
        assert rows[0] == "model,value_us,components_us,error"
        models = {r.split(",")[0]: r for r in rows[1:]}
        assert set(models) == {"ideal", "tb", "a", "b", "c"}
        assert all(r.endswith(",") for r in models.values())
        assert float(models["tb"].split(",")[1]) == pytest.approx(768 * 8 / 885.95e6 * 1e6 + 4.2,
                                                                  abs=1e-6)
        assert "reduction=" in models["a"]
        assert "b.csv" in json.loads((workdir / "b.csv.manifest.json").read_text())["outputs"]

    def test_single_model_precondition(self, workdir, capsys):
        (workdir / "fast.cfg").write_text(FLOW_CFG.replace("R_mbps = 885.95", "R_mbps = 400"))
        assert run("bound", "--config", "fast.cfg", "--model", "a", "--out", "x.csv") == 2
        err = capsys.readouterr().err.strip()
        assert err.startswith("error code=2 type=UnboundedDelayError")
        assert "\n" not in err
        assert not (workdir / "x.csv").exists()


class TestCompare:
    def test_empty_grid(self, workdir):
        (workdir / "sweep.cfg").write_text("lengths_bytes = 256\nloads = 0.5\nR_gbps = 0.9\n")
        assert run("compare", "--config", "sweep.cfg", "--out", "cmp.csv") == 0
        assert (workdir / "cmp.csv").read_text() == ",".join(trace_io.SWEEP_HEADER) + "\n"

    def test_reference_servers(self, workdir):
        (workdir / "sweep.cfg").write_text(
            "lengths_bytes = 256, 1500\nloads = 0.5\nbursts = 3\n"
            "server_params = reference\nr_p_gbps = 0.96\n")
        assert run("compare", "--config", "sweep.cfg", "--out", "cmp.csv") == 0
        rows = (workdir / "cmp.csv").read_text().splitlines()[1:]
        assert len(rows) == 2
        for row in rows:
            f = row.split(",")
            assert float(f[6]) <= float(f[8])  # max delay within model A


class TestCurve:
    def test_export(self, workdir):
        assert run("curve", "--config", "flow.cfg", "--curve", "a", "--out", "c.csv") == 0
        from delaybound.curves import read_csv
        c = read_csv(workdir / "c.csv")
        assert c.times[1] == pytest.approx((6144 - 2048) / (1e9 - 5e8), rel=1e-9)


class TestExitCodes:
    def test_usage(self, workdir, capsys):
        assert run("bound", "--config", "flow.cfg", "--model", "zz", "--out", "x") == 1
        assert "code=1" in capsys.readouterr().err

    def test_missing_key(self, workdir, capsys):
        (workdir / "bad.cfg").write_text("n = 3\n")
        assert run("bound", "--config", "bad.cfg", "--out", "x") == 1
        assert "type=ConfigError" in capsys.readouterr().err

    def test_missing_file(self, workdir, capsys):
        assert run("bound", "--config", "nope.cfg", "--out", "x") == 3

    def test_bad_trace(self, workdir, capsys):
        (workdir / "t.csv").write_text("packet_id,length_bytes,arrival_ns,departure_ns\n0,1,5,2\n")
        assert run("estimate", "--trace", "t.csv", "--out", "x") == 3
        assert ":2:" in capsys.readouterr().err

    def test_infeasible_source(self, workdir, capsys):
        (workdir / "hot.cfg").write_text(SOURCE_CFG.replace("load = 0.8", "load = 1.0"))
        assert run("gen", "--config", "hot.cfg", "--out", "a.csv") == 2
        assert "InfeasibleSourceError" in capsys.readouterr().err

    def test_estimation_failure(self, workdir, capsys):
        (workdir / "t.csv").write_text(
            "packet_id,length_bytes,arrival_ns,departure_ns\n0,256,0,5000\n1,256,1000000,1005000\n")
        assert run("estimate", "--trace", "t.csv", "--out", "x") == 2
        assert "EstimationError" in capsys.readouterr().err
