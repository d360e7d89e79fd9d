import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from figkit.plot import aggregate_series, load_rows, plot
from figkit.spec import FigureSpec, SpecError, parse_spec_text, read_spec


HEADER = ("run_id,preset,seed,trial,sweep_name,sweep_value,algorithm,"
          "der,den,nmse_db,sinr_db,iterations,wall_ms,macs")


def write_csv(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(HEADER + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def toy_rows():
    # two algorithms, two sweep points, three trials
    rows = []
    for trial in range(3):
        for sv, alg, nmse in [(1, "a", -10 - trial), (1, "b", -5 - trial),
                              (2, "a", -12 - trial), (2, "b", -6 - trial)]:
            rows.append(["r", "recover-snr", 0, trial, "snr_db", sv, alg,
                         "", "", nmse, "", 20, 1.0, 100])
    return rows


class TestSpec:
    def test_parse_and_defaults(self):
        spec = parse_spec_text(
            "csv = a.csv\nx = sweep_value\ny = nmse_db\nout = f.png\n")
        assert spec.scale == "linear" and spec.group is None

    def test_unknown_key(self):
        with pytest.raises(SpecError, match=":2"):
            parse_spec_text("csv = a.csv\nbogus = 1\n")

    def test_missing_required(self):
        with pytest.raises(SpecError, match="missing required"):
            parse_spec_text("csv = a.csv\n")

    def test_bad_scale(self):
        with pytest.raises(SpecError):
            FigureSpec(csv="a", x="x", y="y", out="o", scale="cubic")

    def test_read_spec_file(self, tmp_path):
        p = tmp_path / "s.fig"
        p.write_text("csv = a.csv\nx = u\ny = v\nout = o.png\nscale = db\n")
        assert read_spec(p).scale == "db"


class TestAggregation:
    def test_medians_exact(self, tmp_path):
        path = tmp_path / "toy.csv"
        write_csv(path, toy_rows())
        spec = FigureSpec(csv=str(path), x="sweep_value", y="nmse_db",
                          group="algorithm", out=str(tmp_path / "o.png"))
        series = aggregate_series(load_rows(str(path)), spec)
        by_label = {s.label: s for s in series}
        assert by_label["a"].x == (1.0, 2.0)
        assert by_label["a"].center == (-11.0, -13.0)   # median of 3 trials
        assert by_label["b"].center == (-6.0, -7.0)
        assert by_label["a"].q1 == (-11.5, -13.5)

    def test_missing_column_is_named(self, tmp_path):
        path = tmp_path / "toy.csv"
        write_csv(path, toy_rows())
        spec = FigureSpec(csv=str(path), x="sweep_value", y="not_there",
                          out="o.png")
        with pytest.raises(SpecError, match="not_there"):
            aggregate_series(load_rows(str(path)), spec)

    def test_empty_cells_dropped(self, tmp_path):
        path = tmp_path / "toy.csv"
        rows = toy_rows()
        rows[0][9] = ""           # blank one nmse cell
        write_csv(path, rows)
        spec = FigureSpec(csv=str(path), x="sweep_value", y="nmse_db",
                          group="algorithm", out="o.png")
        series = aggregate_series(load_rows(str(path)), spec)
        a = [s for s in series if s.label == "a"][0]
        assert a.center[0] == pytest.approx(-11.5)   # median of 2 left

    def test_plot_does_not_mutate_csv(self, tmp_path):
        path = tmp_path / "toy.csv"
        write_csv(path, toy_rows())
        before = path.read_bytes()
        spec = FigureSpec(csv=str(path), x="sweep_value", y="nmse_db",
                          group="algorithm", out=str(tmp_path / "o.png"))
        r1 = plot(spec)
        r2 = plot(spec)
        assert path.read_bytes() == before
        assert r1.series == r2.series
        assert os.path.exists(r1.path)


class TestCli:
    def test_cli_renders(self, tmp_path):
        path = tmp_path / "toy.csv"
        write_csv(path, toy_rows())
        spec = tmp_path / "fig.spec"
        out = tmp_path / "fig.png"
        spec.write_text(f"csv = {path}\nx = sweep_value\ny = nmse_db\n"
                        f"group = algorithm\nscale = db\nout = {out}\n")
        from figkit.cli import main
        assert main([str(spec)]) == 0
        assert out.exists()
        assert main([str(tmp_path / "missing.spec")]) == 1


@pytest.mark.slow
class TestAllPresets:
    """Secondary acceptance: render every harness preset's CSV and verify
    the drawn series equal independently computed CSV medians."""

    PRESETS = {
        "recover-snr": dict(trials=2, extra=["--trials", "2"]),
        "recover-cols": dict(trials=2, extra=["--trials", "2"]),
        "recover-blocks": dict(trials=2, extra=["--trials", "2"]),
        "convergence": dict(trials=2, extra=["--trials", "2"]),
        "power-sweep": dict(trials=2, extra=["--trials", "2"]),
        "access-vs-U": dict(trials=1, extra=["--trials", "1"]),
        "access-vs-antennas": dict(trials=1, extra=["--trials", "1"]),
        "access-vs-active": dict(trials=1, extra=["--trials", "1"]),
    }

    @pytest.fixture(scope="class")
    def preset_csvs(self, tmp_path_factory):
        root = tmp_path_factory.mktemp("csvs")
        cfg = root / "small.cfg"
        cfg.write_text(
            "[run]\npreset = power-sweep\n"
            "[scenario]\nn_ue = 16\nn_active = 2\nn_ap = 1\nupa_y = 2\n"
            "upa_z = 2\nn_paths = 2\n"
            "[solver]\nmax_iter = 10\nrough_max_iter = 8\n"
            "[benchmark]\ni_dim = 64\nl_dim = 32\nj_dim = 16\n")
        paths = {}
        for preset, info in self.PRESETS.items():
            out = root / f"{preset}.csv"
            cmd = [sys.executable, "-m", "otfsra.harness.cli", "run",
                   "--config", str(cfg), "--preset", preset, "--seed", "3",
                   "--out", str(out)] + info["extra"]
            proc = subprocess.run(cmd, capture_output=True, text=True,
                                  timeout=900)
            assert proc.returncode == 0, proc.stderr[-2000:]
            paths[preset] = out
        return paths

    Y_FOR = {"power-sweep": "sinr_db", "access-vs-U": "den",
             "access-vs-antennas": "nmse_db", "access-vs-active": "den"}

    def test_render_all_presets(self, preset_csvs, tmp_path):
        for preset, csv_path in preset_csvs.items():
            y = self.Y_FOR.get(preset, "nmse_db")
            out = tmp_path / f"{preset}.png"
            spec = FigureSpec(csv=str(csv_path), x="sweep_value", y=y,
                              group="algorithm", scale="db",
                              out=str(out), title=preset)
            result = plot(spec)
            assert out.exists() and out.stat().st_size > 0
            # independent median check straight off the CSV text
            with open(csv_path) as fh:
                rows = list(csv.DictReader(fh))
            for series in result.series:
                for x, med in zip(series.x, series.center):
                    vals = [float(r[y]) for r in rows
                            if r["algorithm"] == series.label
                            and r[y] != ""
                            and float(r["sweep_value"]) == x]
                    assert med == np.median(vals)
