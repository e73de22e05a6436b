import csv
import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codedfft import cli
from codedfft.cli import CSV_COLUMNS, ConfigError, ExperimentConfig, config_to_text, main, parse_config


def run_cli(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def csv_part(stdout):
    lines = stdout.splitlines()
    start = next(i for i, l in enumerate(lines) if l.startswith("K,P,N"))
    return "\n".join(lines[start:start + 2]) + "\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestBounds:
    def rows(self, capsys, *sets):
        argv = ["bounds"] + [a for s in sets for a in ("--set", s)]
        code, out = run_cli(argv, capsys)
        assert code == 0
        return {r["primitive"]: r for r in read_csv(out.out)}

    def test_transpose_row(self, capsys):
        r = self.rows(capsys, "K=4", "P=5", "N=64")["transpose"]
        assert (int(r["C1"]), float(r["C2"])) == (2, 16)

    def test_encode_row(self, capsys):
        r = self.rows(capsys, "K=4", "P=5", "N=64")["encode2-upper"]
        assert (int(r["C1"]), float(r["C2"])) == (4, 32)

    def test_threshold(self, capsys):
        rows = self.rows(capsys, "K=64", "P=66", "N=16384")
        assert float(rows["crossover-threshold"]["value"]) == 3.0
        assert rows["crossover-predicted"]["value"] == "true"

    def test_bad_geometry(self, capsys):
        code, out = run_cli(["bounds", "--set", "K=6", "--set", "P=5"], capsys)
        assert code == 1 and "error" in out.err


class TestRun:
    def test_one_erasure_ok(self, tmp_path, capsys):
        faults = write(tmp_path, "f.txt", "rowfft,1,erasure\n")
        code, out = run_cli(["run", "--set", "N=64", "--set", "K=4", "--set", "P=6", "--faults", faults], capsys)
        assert code == 0 and "result: ok" in out.out
        row = read_csv(csv_part(out.out))[0]
        assert list(row) == CSV_COLUMNS
        assert float(row["max_rel_err"]) < 1e-8 and row["recoverable"] == "true"

    def test_too_many_erasures(self, tmp_path, capsys):
        faults = write(tmp_path, "f.txt", "colfft,0,erasure\ncolfft,1,erasure\ncolfft,2,erasure\n")
        code, out = run_cli(["run", "--set", "N=64", "--set", "K=4", "--set", "P=6", "--faults", faults], capsys)
        assert code == 2 and "unrecoverable" in out.out

    def test_faults_key_in_config(self, tmp_path, capsys):
        faults = write(tmp_path, "f.txt", "rowfft,0,erasure\n")
        conf = write(tmp_path, "c.cfg", f"N = 16\nK = 2\nP = 3\nparity = checksum\nfaults = {faults}\n")
        code, out = run_cli(["run", "--config", conf], capsys)
        assert code == 0 and "decoded=True" in out.out

    @pytest.mark.parametrize("argv", [
        ["run", "--set", "bogus=1"],
        ["run", "--set", "K=three"],
        ["run", "--set", "K=4", "--set", "P=4"],
        ["run", "--set", "regime=fastest"],
        ["run", "--set", "noequals"],
        ["run", "--config", "/nonexistent/file.cfg"],
        ["frobnicate"],
    ])
    def test_usage_errors(self, argv, capsys):
        with pytest.raises(SystemExit) if argv == ["frobnicate"] else _nothing() as exc:
            code, _ = run_cli(argv, capsys)
        assert (exc.value.code if argv == ["frobnicate"] else code) == 1

    def test_bad_fault_file(self, tmp_path, capsys):
        faults = write(tmp_path, "f.txt", "rowfft,x,erasure\n")
        assert run_cli(["run", "--faults", faults], capsys)[0] == 1

    def test_mismatch_exit(self, monkeypatch, capsys):
        monkeypatch.setattr(cli, "CODED_TOL", 0.0)
        monkeypatch.setattr(cli, "UNCODED_TOL", 0.0)
        code, out = run_cli(["run", "--set", "N=64", "--set", "seed=3"], capsys)
        assert code == 3 and "mismatch" in out.out

    def test_csv_out(self, tmp_path, capsys):
        path = tmp_path / "run.csv"
        assert run_cli(["run", "--out", str(path)], capsys)[0] == 0
        assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)


class _nothing:
    def __enter__(self):
        return None

    def __exit__(self, *a):
        return False


class TestConfig:
    def test_comments_and_dotted_keys(self):
        cfg = parse_config("# grid\nN = 256  # points\nsweep.K = 4,8\nsweep.beta = 1/K\n")
        assert cfg.N == 256 and cfg.sweep_K == "4,8" and cfg.sweep_beta == "1/K"

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            parse_config("N 64\n")

    @settings(max_examples=60, deadline=None)
    @given(
        N=st.sampled_from([16, 64, 256, 1024]),
        K=st.sampled_from([2, 4, 8]),
        r=st.integers(1, 6),
        alpha=st.floats(0, 1e3, allow_nan=False),
        beta=st.floats(0, 1e3, allow_nan=False),
        seed=st.integers(0, 2**31),
        regime=st.sampled_from(["min-rounds", "min-bandwidth"]),
        segments=st.sampled_from(["auto", "1", "4"]),
        parity=st.sampled_from(["vandermonde", "checksum"]),
        dry=st.booleans(),
        sweep=st.sampled_from(["", "2,4", "1-5"]),
    )
    def test_round_trip(self, N, K, r, alpha, beta, seed, regime, segments, parity, dry, sweep):
        cfg = ExperimentConfig(N=N, K=K, P=K + r, alpha=alpha, beta=beta, seed=seed, regime=regime,
                               segments=segments, parity=parity, dry_run=dry, sweep_K=sweep, sweep_PminusK=sweep)
        assert parse_config(config_to_text(cfg)) == cfg


class TestSweep:
    def sweep(self, capsys, *sets, extra=()):
        argv = ["sweep"] + [a for s in sets for a in ("--set", s)] + list(extra)
        code, out = run_cli(argv, capsys)
        assert code == 0
        return out.out

    def test_predicted_column(self, capsys):
        rows = read_csv(self.sweep(capsys, "sweep.K=16", "sweep.PminusK=1-4", "n_per_node=512", "dry_run=true"))
        got = [(int(r["P"]) - int(r["K"]), r["predicted_crossover"]) for r in rows]
        assert got == [(1, "true"), (2, "false"), (3, "false"), (4, "false")]
        assert all(r["max_rel_err"] == "" and r["recoverable"] == "" for r in rows)

    def test_executed_points_have_errors(self, capsys):
        rows = read_csv(self.sweep(capsys, "sweep.K=2,4", "sweep.PminusK=1,2", "N=64"))
        assert len(rows) == 4
        assert all(float(r["max_rel_err"]) < 1e-8 and r["recoverable"] == "true" for r in rows)

    def test_empty_range_header_only(self, capsys):
        out = self.sweep(capsys, "sweep.PminusK=5-4")
        assert out == ",".join(CSV_COLUMNS) + "\n"

    def test_invalid_points_skipped(self, capsys):
        rows = read_csv(self.sweep(capsys, "sweep.K=3,4", "N=64", "P=6"))
        assert [r["K"] for r in rows] == ["4"]

    def test_byte_identical_reruns(self, tmp_path, capsys):
        paths = [tmp_path / f"s{i}.csv" for i in range(2)]
        for p in paths:
            self.sweep(capsys, "sweep.K=2,4", "sweep.PminusK=1-3", "sweep.beta=0.5,1/K", "N=256",
                       extra=["--out", str(p)])
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_figures(self, tmp_path, capsys):
        figs = tmp_path / "figs"
        out = self.sweep(capsys, "sweep.K=4,8", "sweep.PminusK=1-3", "n_per_node=64", "dry_run=true",
                         extra=["--figures", str(figs)])
        pngs = sorted(p.name for p in figs.iterdir())
        assert pngs == ["crossover_map.png", "overhead_ratio.png"]
        assert all((figs / n).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for n in pngs)
        assert "figure" in out
