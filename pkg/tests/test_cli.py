import json

import pytest

from dpsketch.cli import main
from dpsketch.streamio import write_stream_file
from dpsketch.streams import StreamConfig, generate_stream

GOLDEN_HEADERS = {
    "sum": "t,estimate,exact,abs_error",
    "distinct": "t,estimate,exact,abs_error",
    "f2": "t,estimate,exact,abs_error",
    "heavy-hitters": "t,element,f_hat,exact_f,in_exact_hh",
    "low-freq": "t,j,s_hat_j,exact_j",
    "moment": "t,F_hat_p,exact_F_p,rel_error",
    "sliding": "t,window_estimate,exact_window_value",
    "point-query": "element,f_hat",
}


@pytest.fixture
def stream_file(tmp_path):
    cfg = StreamConfig(T=64, n=16)
    stream = generate_stream("zipf", cfg, seed=3, s=1.2)
    path = tmp_path / "stream.txt"
    write_stream_file(path, stream, cfg)
    return str(path)


def run(args):
    return main(args)


class TestSubcommands:
    def test_sum_tree_noise_off_exact(self, stream_file, tmp_path):
        out = tmp_path / "out.csv"
        code = run(
            ["sum", "--mechanism", "tree", "--epsilon", "1", "--T", "64",
             "--input", stream_file, "--output", str(out), "--noise", "off"]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == GOLDEN_HEADERS["sum"]
        for line in lines[1:]:
            t, est, exact, err = line.split(",")
            assert est == exact and err == "0"

    def test_distinct_small_noise_off_exact(self, stream_file, tmp_path):
        out = tmp_path / "out.csv"
        code = run(
            ["distinct", "--epsilon", "1", "--T", "64", "--n", "16",
             "--input", stream_file, "--output", str(out), "--noise", "off",
             "--variant", "tree"]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == GOLDEN_HEADERS["distinct"]
        assert all(line.split(",")[3] == "0" for line in lines[1:])

    def test_low_freq_noise_off_exact(self, stream_file, tmp_path):
        out = tmp_path / "out.csv"
        code = run(
            ["low-freq", "--k", "2", "--epsilon", "1", "--T", "64", "--n", "16",
             "--copies", "2", "--input", stream_file, "--output", str(out),
             "--noise", "off"]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == GOLDEN_HEADERS["low-freq"]
        for line in lines[1:]:
            _, _, s_hat, exact = line.split(",")
            assert float(s_hat) == float(exact)

    def test_f2_and_point_query_snapshot(self, stream_file, tmp_path):
        out = tmp_path / "f2.csv"
        snap = tmp_path / "sketch.dpcs"
        code = run(
            ["f2", "--epsilon", "1", "--T", "64", "--n", "16", "--copies", "2",
             "--buckets", "32", "--input", stream_file, "--output", str(out),
             "--snapshot-out", str(snap), "--noise", "off"]
        )
        assert code == 0
        assert snap.read_bytes()[:5] == b"DPCS1"
        pq = tmp_path / "pq.csv"
        code = run(
            ["point-query", "--element", "0", "--snapshot", str(snap),
             "--output", str(pq)]
        )
        assert code == 0
        lines = pq.read_text().splitlines()
        assert lines[0] == GOLDEN_HEADERS["point-query"]

    def test_heavy_hitters_csv(self, stream_file, tmp_path):
        out = tmp_path / "hh.csv"
        code = run(
            ["heavy-hitters", "--p", "2", "--k", "2", "--epsilon", "4",
             "--T", "64", "--n", "16", "--copies", "1", "--input", stream_file,
             "--output", str(out), "--noise", "off"]
        )
        assert code == 0
        assert out.read_text().splitlines()[0] == GOLDEN_HEADERS["heavy-hitters"]

    def test_moment_csv(self, stream_file, tmp_path):
        out = tmp_path / "m.csv"
        code = run(
            ["moment", "--p", "2", "--epsilon", "1", "--T", "64", "--n", "16",
             "--copies", "1", "--input", stream_file, "--output", str(out),
             "--noise", "off"]
        )
        assert code == 0
        assert out.read_text().splitlines()[0] == GOLDEN_HEADERS["moment"]

    @pytest.mark.parametrize("stat", ["sum", "distinct", "f2", "moment"])
    def test_sliding_csv(self, stat, stream_file, tmp_path):
        out = tmp_path / "w.csv"
        code = run(
            ["sliding", "--stat", stat, "--W", "8", "--epsilon", "8",
             "--T", "64", "--n", "16", "--p", "2", "--tau", "4",
             "--input", stream_file, "--output", str(out), "--noise", "off"]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == GOLDEN_HEADERS["sliding"]
        assert len(lines) == 65

    def test_sensitivity_check_runs(self, tmp_path, capsys):
        code = run(["sensitivity-check", "--mapping", "identity", "--n", "2", "--T", "3"])
        assert code == 0
        assert "PASS" in capsys.readouterr().out

    def test_experiment_runs(self, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text(
            json.dumps(
                {
                    "mechanism": "sum-tree",
                    "grid": {"epsilon": [1.0], "T": [16]},
                    "generator": {"kind": "uniform", "n": 4},
                    "trials": 1,
                    "seed_base": 0,
                    "noise_off": True,
                }
            )
        )
        assert run(["experiment", "--spec", str(spec)]) == 0
        assert "max_error=0" in capsys.readouterr().out


class TestDeterminism:
    def test_identical_seed_identical_bytes(self, stream_file, tmp_path):
        outs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            run(
                ["sum", "--mechanism", "group", "--epsilon", "1", "--T", "64",
                 "--seed", "42", "--input", stream_file, "--output", str(out)]
            )
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_different_seed_differs(self, stream_file, tmp_path):
        outs = []
        for seed, name in (("1", "a.csv"), ("2", "b.csv")):
            out = tmp_path / name
            run(
                ["sum", "--mechanism", "tree", "--epsilon", "1", "--T", "64",
                 "--seed", seed, "--input", stream_file, "--output", str(out)]
            )
            outs.append(out.read_bytes())
        assert outs[0] != outs[1]

    def test_env_seed_used(self, stream_file, tmp_path, monkeypatch):
        monkeypatch.setenv("DPSKETCH_SEED", "77")
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        run(["sum", "--mechanism", "group", "--epsilon", "1", "--T", "64",
             "--input", stream_file, "--output", str(out1)])
        run(["sum", "--mechanism", "group", "--epsilon", "1", "--T", "64",
             "--seed", "77", "--input", stream_file, "--output", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()


class TestExitCodes:
    def test_missing_file_is_io_error(self, tmp_path):
        code = run(
            ["sum", "--mechanism", "tree", "--epsilon", "1", "--T", "8",
             "--input", str(tmp_path / "missing.txt")]
        )
        assert code == 3

    def test_parse_error(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("zap\n")
        code = run(
            ["sum", "--mechanism", "tree", "--epsilon", "1", "--T", "8",
             "--input", str(bad)]
        )
        assert code == 3

    def test_config_error(self, stream_file):
        code = run(
            ["sum", "--mechanism", "tree", "--epsilon", "1", "--T", "2",
             "--input", stream_file]
        )
        assert code == 2

    def test_header_flag_mismatch(self, stream_file):
        code = run(
            ["distinct", "--epsilon", "1", "--T", "64", "--n", "999",
             "--input", stream_file]
        )
        assert code == 2

    def test_resource_error(self, capsys):
        code = run(
            ["sensitivity-check", "--mapping", "identity", "--n", "3", "--T", "6",
             "--budget", "5"]
        )
        assert code == 4
