import json

import numpy as np
import pytest

from oracles import eig_triple
from qsd.cli import main, parse_model_config
from qsd.kernels import read_kernel, write_kernel
from qsd.models import golden_kernel_path


@pytest.fixture()
def w3_file(tmp_path, w3):
    p = tmp_path / "w3.txt"
    write_kernel(w3, p)
    return str(p)


def read_lines(path):
    with open(path) as fh:
        return fh.read()


class TestModelSubcommand:
    def test_builds_kernel_from_config(self, tmp_path):
        cfg = tmp_path / "m.cfg"
        cfg.write_text(
            "kind logistic_bd\nn 4\nparams.birth0 0.4\nparams.birth_step 0.1\n"
            "params.death 0.3\n"
        )
        out = tmp_path / "out"
        assert main(["model", "--config", str(cfg), "--out", str(out)]) == 0
        K = read_kernel(out / "kernel.txt")
        assert K.n == 4

    def test_config_error_has_line_number(self, tmp_path):
        cfg = tmp_path / "m.cfg"
        cfg.write_text("kind w3\nn three\n")
        with pytest.raises(ValueError, match=":2"):
            parse_model_config(str(cfg))

    def test_cli_reports_config_error_as_usage(self, tmp_path, capsys):
        cfg = tmp_path / "m.cfg"
        cfg.write_text("kind w3\nn three\n")
        out = tmp_path / "out"
        assert main(["model", "--config", str(cfg), "--out", str(out)]) == 2
        assert ":2" in capsys.readouterr().err

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "m.cfg"
        cfg.write_text("kind w3\nn 3\nwhatever 1\n")
        with pytest.raises(ValueError, match="unknown key"):
            parse_model_config(str(cfg))


class TestSpectralSubcommand:
    def test_csv_matches_eigen_oracle(self, tmp_path, w3_file, w3):
        out = tmp_path / "s"
        assert main(["spectral", "--kernel", w3_file, "--out", str(out)]) == 0
        text = read_lines(out / "spectral.csv").splitlines()
        assert text[1] == "state,alpha,eta,beta"
        alpha, rho, eta, _ = eig_triple(w3.entries)
        head = dict(kv.split("=") for kv in text[0].split())
        assert float(head["rho"]) == pytest.approx(rho, abs=1e-10)
        for x, line in enumerate(text[2:]):
            vals = [float(v) for v in line.split(",")]
            assert vals[0] == x
            assert vals[1] == pytest.approx(alpha[x], abs=1e-10)
            assert vals[2] == pytest.approx(eta[x], abs=1e-10)

    def test_manifest_written(self, tmp_path, w3_file):
        out = tmp_path / "s"
        main(["spectral", "--kernel", w3_file, "--out", str(out)])
        manifest = json.loads(read_lines(out / "manifest.json"))
        assert manifest["subcommand"] == "spectral"
        assert "config_hash" in manifest and "timestamp" in manifest

    def test_manifest_stable_modulo_timestamp(self, tmp_path, w3_file):
        out = tmp_path / "s"
        manifests = []
        for _ in range(2):
            main(["spectral", "--kernel", w3_file, "--out", str(out)])
            m = json.loads(read_lines(out / "manifest.json"))
            m.pop("timestamp")
            manifests.append(m)
        assert manifests[0] == manifests[1]


class TestVerifySubcommand:
    def test_t3_zero_constants(self, tmp_path, t3):
        kf = tmp_path / "t3.txt"
        write_kernel(t3, kf)
        out = tmp_path / "v"
        code = main(["verify", "--kernel", str(kf), "--out", str(out),
                     "--t-max", "60", "--pair-t-max", "4", "--pair-lag-max", "12"])
        assert code == 0
        eta_text = read_lines(out / "eta_bound.csv")
        assert "constant=0" in eta_text.splitlines()[-1]
        q_text = read_lines(out / "qproc_approx.csv")
        assert "constant=0" in q_text.splitlines()[-1]

    def test_w3_produces_three_reports(self, tmp_path, w3_file):
        out = tmp_path / "v"
        code = main(["verify", "--kernel", w3_file, "--out", str(out),
                     "--t-max", "80", "--pair-t-max", "5", "--pair-lag-max", "20"])
        assert code == 0
        for name in ("eta_bound.csv", "qproc_approx.csv", "q_mixing.csv"):
            lines = read_lines(out / name).splitlines()
            assert lines[0] == "t,T,observed,bound,ratio"
            assert lines[-1].startswith("# name=")


class TestErgodicSubcommand:
    def test_uniform_plan(self, tmp_path, w3_file):
        out = tmp_path / "e"
        code = main(["ergodic", "--kernel", w3_file, "--out", str(out),
                     "--f", "1,0,0", "--T-grid", "10:60:10"])
        assert code == 0
        lines = read_lines(out / "ergodic.csv").splitlines()
        assert lines[0] == "time,error,bound,ratio"
        assert len(lines) == 1 + 6  # header plus six horizons

    def test_dirac_plan(self, tmp_path, w3_file):
        out = tmp_path / "e"
        code = main(["ergodic", "--kernel", w3_file, "--out", str(out),
                     "--f", "1,0,0", "--T-grid", "20,30", "--plan", "dirac:5"])
        assert code == 0

    def test_bad_f_length(self, tmp_path, w3_file, capsys):
        out = tmp_path / "e"
        code = main(["ergodic", "--kernel", w3_file, "--out", str(out),
                     "--f", "1,0", "--T-grid", "10:20"])
        assert code == 2
        assert "entries" in capsys.readouterr().err


class TestEstimateAndSweep:
    def test_estimate_row_format(self, tmp_path, w3_file):
        out = tmp_path / "est"
        code = main(["estimate", "--kernel", w3_file, "--out", str(out),
                     "--f", "1,0,0", "--N", "5000", "--seed", "3"])
        assert code == 0
        lines = read_lines(out / "estimate.csv").splitlines()
        assert lines[0] == "N,T,t0,N_T,estimate,stderr,exact,abs_error,predicted"
        vals = lines[1].split(",")
        assert int(vals[0]) == 5000

    def test_sweep_rows(self, tmp_path, w3_file):
        out = tmp_path / "sw"
        code = main(["sweep", "--kernel", w3_file, "--out", str(out),
                     "--f", "1,0,0", "--N-list", "100,1000", "--reps", "4",
                     "--seed", "9"])
        assert code == 0
        lines = read_lines(out / "sweep.csv").splitlines()
        assert lines[0] == "N,T,t0,N_T,estimate,stderr,exact,abs_error,predicted"
        assert len(lines) == 1 + 2

    def test_thread_count_never_changes_bytes(self, tmp_path, w3_file):
        outs = []
        for threads in ("1", "4"):
            out = tmp_path / f"t{threads}"
            main(["estimate", "--kernel", w3_file, "--out", str(out),
                  "--f", "0,1,0", "--N", "4000", "--seed", "11",
                  "--threads", threads])
            main(["sweep", "--kernel", w3_file, "--out", str(out),
                  "--f", "0,1,0", "--N-list", "50,500", "--reps", "3",
                  "--seed", "11", "--threads", threads])
            outs.append(
                read_lines(out / "estimate.csv") + read_lines(out / "sweep.csv")
            )
        assert outs[0] == outs[1]


class TestConverseSubcommand:
    def test_w3_certifies(self, tmp_path, w3_file):
        out = tmp_path / "c"
        code = main(["converse", "--kernel", w3_file, "--out", str(out),
                     "--T-max", "60"])
        assert code == 0
        lines = read_lines(out / "converse.csv").splitlines()
        assert lines[0] == "T,sup_pair_tv,envelope"
        assert "certified=True" in lines[-1]

    def test_exhausted_search_exits_three(self, tmp_path, w3_file, capsys):
        out = tmp_path / "c"
        code = main(["converse", "--kernel", w3_file, "--out", str(out),
                     "--t1-max", "1", "--T-max", "40"])
        assert code == 3
        assert "not certified" in capsys.readouterr().err


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate", "--out", "x"]) == 2

    def test_no_kernel_source(self, tmp_path, capsys):
        assert main(["spectral", "--out", str(tmp_path / "x")]) == 2
        assert "--kernel" in capsys.readouterr().err

    def test_missing_kernel_file(self, tmp_path, capsys):
        code = main(["spectral", "--kernel", str(tmp_path / "nope.txt"),
                     "--out", str(tmp_path / "x")])
        assert code == 2


class TestRerunByteIdentical:
    def test_spectral_and_verify_rerun(self, tmp_path, w3_file):
        texts = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            main(["spectral", "--kernel", w3_file, "--out", str(out)])
            main(["verify", "--kernel", w3_file, "--out", str(out),
                  "--t-max", "40", "--pair-t-max", "3", "--pair-lag-max", "10"])
            texts.append(
                read_lines(out / "spectral.csv")
                + read_lines(out / "eta_bound.csv")
                + read_lines(out / "qproc_approx.csv")
                + read_lines(out / "q_mixing.csv")
            )
        assert texts[0] == texts[1]

    def test_golden_kernel_available(self):
        assert str(golden_kernel_path("w3")).endswith("w3.txt")
