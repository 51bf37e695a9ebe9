import json

import numpy as np
import pytest

import unfolder as uf
from unfolder import cli


def run_cli(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run_cli("simulate", "cauchy-gauss", "--out", str(out)) == 0
    return out


@pytest.fixture(scope="module")
def response_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("resp") / "R.json"
    assert run_cli("response", "--kernel", "gauss", "--sigma", "1.0",
                   "--meas-axis=-10:10:100", "--out", str(path)) == 0
    return path


class TestSimulate:
    def test_writes_three_files(self, sim_dir):
        for name in ("truth.json", "measured.json", "pairs.csv"):
            assert (sim_dir / name).exists()
        measured = uf.Histogram.load_json(sim_dir / "measured.json")
        assert measured.kind == "counts"
        assert measured.total <= 5000

    def test_deterministic_output(self, sim_dir, tmp_path):
        assert run_cli("simulate", "cauchy-gauss", "--out", str(tmp_path)) == 0
        for name in ("truth.json", "measured.json", "pairs.csv"):
            assert (tmp_path / name).read_bytes() == (sim_dir / name).read_bytes()

    def test_missing_entries_field_exits_2(self, tmp_path, capsys):
        config = {
            "truth": {"type": "cauchy", "location": 0.0, "scale": 1.0},
            "smearing": {"type": "gaussian_convolution", "sigma": 1.0},
            "seed": 1,
            "meas_axis": {"low": -1.0, "high": 1.0, "nbins": 4},
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(config))
        assert run_cli("simulate", str(path), "--out", str(tmp_path / "o")) == 2
        assert "entries" in capsys.readouterr().err

    def test_unknown_config_exits_2(self, tmp_path):
        assert run_cli("simulate", "no-such-config",
                       "--out", str(tmp_path)) == 2

    def test_calorimeter_demo_config(self, tmp_path):
        assert run_cli("simulate", "calorimeter", "--out", str(tmp_path)) == 0
        measured = uf.Histogram.load_json(tmp_path / "measured.json")
        assert measured.axis.low == 0.0
        pairs = uf.read_pairs_csv(tmp_path / "pairs.csv")
        rm = uf.ResponseMatrix.from_pairs(pairs, measured.axis, measured.axis)
        assert np.all(rm.matrix.sum(axis=0) <= 1.0)


class TestResponse:
    def test_convolution_k_is_one(self, response_file):
        payload = json.loads(response_file.read_text())
        assert abs(payload["k_factor"] - 1.0) < 1e-6

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_pairs_source(self, sim_dir, tmp_path):
        out = tmp_path / "Rp.json"
        assert run_cli("response", "--pairs", str(sim_dir / "pairs.csv"),
                       "--meas-axis=-10:10:100", "--out", str(out)) == 0
        rm = uf.ResponseMatrix.load_json(out)
        assert np.all(rm.matrix.sum(axis=0) <= 1.0)

    def test_source_is_mandatory_and_exclusive(self, sim_dir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("response", "--meas-axis=-10:10:100",
                    "--out", str(tmp_path / "r.json"))
        assert exc.value.code == 2
        with pytest.raises(SystemExit) as exc:
            run_cli("response", "--kernel", "gauss", "--sigma", "1",
                    "--pairs", str(sim_dir / "pairs.csv"),
                    "--meas-axis=-10:10:100", "--out", str(tmp_path / "r.json"))
        assert exc.value.code == 2


class TestUnfold:
    def test_full_pipeline_improves_on_measured(self, sim_dir, response_file,
                                                tmp_path):
        out = tmp_path / "result.json"
        trace = tmp_path / "trace.csv"
        svg = tmp_path / "plot.svg"
        assert run_cli("unfold", "--measured", str(sim_dir / "measured.json"),
                       "--response", str(response_file),
                       "--stop", "stat-frac=0.05",
                       "--truth", str(sim_dir / "truth.json"),
                       "--out", str(out), "--trace", str(trace),
                       "--svg", str(svg)) == 0
        result = uf.Histogram.load_json(out)
        truth = uf.Histogram.load_json(sim_dir / "truth.json")
        measured = uf.Histogram.load_json(sim_dir / "measured.json")
        assert result.unfolded and result.stat_err is not None
        assert uf.l1_distance(result, truth) < uf.l1_distance(measured, truth)
        header, *rows = trace.read_text().strip().splitlines()
        assert header == "n,bias_bound,stat_integral,stat_fraction,syst_bound,total"
        assert float(rows[-1].split(",")[3]) >= 0.05
        assert svg.read_text().startswith("<svg ")
        assert "timestamp" not in svg.read_text()

    def test_deterministic_result(self, sim_dir, response_file, tmp_path):
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            assert run_cli("unfold", "--measured", str(sim_dir / "measured.json"),
                           "--response", str(response_file),
                           "--stop", "fixed=3", "--out", str(out)) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_fixed_zero_is_first_iterate(self, sim_dir, response_file, tmp_path):
        out = tmp_path / "f0.json"
        assert run_cli("unfold", "--measured", str(sim_dir / "measured.json"),
                       "--response", str(response_file),
                       "--stop", "fixed=0", "--out", str(out)) == 0
        rm = uf.ResponseMatrix.load_json(response_file)
        g = uf.Histogram.load_json(sim_dir / "measured.json")
        oracle = rm.transpose_apply(g.contents) / rm.k_factor
        np.testing.assert_allclose(uf.Histogram.load_json(out).contents,
                                   oracle, rtol=0, atol=1e-12)

    def test_min_total_matches_trace_argmin(self, sim_dir, response_file,
                                            tmp_path, capsys):
        out = tmp_path / "mt.json"
        trace = tmp_path / "mt.csv"
        assert run_cli("unfold", "--measured", str(sim_dir / "measured.json"),
                       "--response", str(response_file),
                       "--stop", "min-total",
                       "--syst", str(sim_dir / "measured.json"),
                       "--out", str(out), "--trace", str(trace)) == 0
        stdout = capsys.readouterr().out
        stopped = int(stdout.split("stopped at order")[1].split()[0].rstrip(";"))
        rows = trace.read_text().strip().splitlines()[1:]
        totals = [float(r.split(",")[5]) for r in rows]
        assert stopped == int(np.argmin(totals))

    def test_rebin_needs_a_rebuildable_source(self, sim_dir, response_file,
                                              tmp_path):
        assert run_cli("unfold", "--measured", str(sim_dir / "measured.json"),
                       "--response", str(response_file),
                       "--rebin", "2,2", "--stop", "fixed=1",
                       "--out", str(tmp_path / "x.json")) == 2

    def test_rebin_with_kernel_runs_on_extended_axis(self, sim_dir, tmp_path):
        out = tmp_path / "rebinned.json"
        assert run_cli("unfold", "--measured", str(sim_dir / "measured.json"),
                       "--kernel", "gauss", "--sigma", "1.0",
                       "--rebin", "1.2,2", "--stop", "fixed=2",
                       "--out", str(out)) == 0
        result = uf.Histogram.load_json(out)
        assert result.nbins == 240  # 100 bins extended 1.2x, refined 2x
        assert result.axis.low == pytest.approx(-12.0)

    def test_axis_mismatch_exits_3(self, response_file, tmp_path):
        bad = uf.Histogram(uf.Axis.uniform(0, 1, 4), [1.0] * 4,
                           stat_err=[1.0] * 4)
        path = tmp_path / "bad.json"
        bad.save_json(path)
        assert run_cli("unfold", "--measured", str(path),
                       "--response", str(response_file),
                       "--stop", "fixed=1", "--out", str(tmp_path / "o.json")) == 3

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_overflow_exits_4(self, tmp_path):
        ax = uf.Axis.uniform(0, 2, 2)
        rm = uf.ResponseMatrix(ax, ax, np.array([[0.9, 0.05], [0.05, 0.9]]))
        rm.save_json(tmp_path / "R.json")
        g = uf.Histogram(ax, [1.79e308, 1.79e308], stat_err=[1.0, 1.0])
        g.save_json(tmp_path / "g.json")
        assert run_cli("unfold", "--measured", str(tmp_path / "g.json"),
                       "--response", str(tmp_path / "R.json"),
                       "--stop", "fixed=5",
                       "--out", str(tmp_path / "o.json")) == 4

    def test_bad_stop_spec_exits_2(self, sim_dir, response_file, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("unfold", "--measured", str(sim_dir / "measured.json"),
                    "--response", str(response_file),
                    "--stop", "sometimes", "--out", str(tmp_path / "o.json"))
        assert exc.value.code == 2


class TestFoldInvert:
    def test_fold_identity_response(self, tmp_path):
        ax = uf.Axis.uniform(0, 4, 4)
        rm = uf.ResponseMatrix(ax, ax, np.eye(4))
        rm.save_json(tmp_path / "R.json")
        h = uf.Histogram(ax, [1.0, 2.0, 3.0, 4.0])
        h.save_json(tmp_path / "f.json")
        assert run_cli("fold", "--truth", str(tmp_path / "f.json"),
                       "--response", str(tmp_path / "R.json"),
                       "--out", str(tmp_path / "g.json")) == 0
        out = uf.Histogram.load_json(tmp_path / "g.json")
        np.testing.assert_array_equal(out.contents, h.contents)

    def test_fold_then_unfold_recovers_within_bias_bound(self, tmp_path):
        # noiseless round trip on a well-conditioned system
        ax = uf.Axis.uniform(0.0, 8.0, 8)
        rm = uf.ResponseMatrix.from_kernel(uf.GaussianSmearing(0.5).kernel(),
                                           ax, ax)
        rm.save_json(tmp_path / "R.json")
        truth = uf.Histogram(ax, np.diff(uf.GaussianTruth(4.0, 1.0).cdf(ax.edges))
                             * 1000.0)
        truth.save_json(tmp_path / "truth.json")
        assert run_cli("fold", "--truth", str(tmp_path / "truth.json"),
                       "--response", str(tmp_path / "R.json"),
                       "--out", str(tmp_path / "g.json")) == 0
        g = uf.Histogram.load_json(tmp_path / "g.json")
        g = uf.Histogram(g.axis, g.contents, stat_err=np.zeros(8), kind=g.kind)
        g.save_json(tmp_path / "g.json")
        trace = tmp_path / "t.csv"
        assert run_cli("unfold", "--measured", str(tmp_path / "g.json"),
                       "--response", str(tmp_path / "R.json"),
                       "--stop", "fixed=500", "--out", str(tmp_path / "u.json"),
                       "--trace", str(trace)) == 0
        result = uf.Histogram.load_json(tmp_path / "u.json")
        final_bias = float(trace.read_text().strip().splitlines()[-1].split(",")[1])
        width = 1.0
        per_bin_avg_dev = np.abs(result.contents - truth.contents) / width
        assert per_bin_avg_dev.max() <= final_bias

    def test_invert_reports_oscillation_metrics(self, sim_dir, response_file,
                                                tmp_path, capsys):
        with pytest.warns(RuntimeWarning, match="rank"):
            code = run_cli("invert", "--measured", str(sim_dir / "measured.json"),
                           "--response", str(response_file),
                           "--truth", str(sim_dir / "truth.json"),
                           "--out", str(tmp_path / "inv.json"))
        assert code == 0
        err = capsys.readouterr().err
        assert "sign alternation" in err and "truth peak" in err
        inv = uf.Histogram.load_json(tmp_path / "inv.json")
        assert inv.unfolded and np.any(inv.contents < 0)
