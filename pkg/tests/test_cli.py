"""Tests for the command-line front end."""

import numpy as np
import pytest

from blindid.analysis import type2_rate_at_level, type2_rate_gv, type2_rate_spectrum_avg
from blindid.channel import Rayleigh
from blindid.cli import main
from blindid.codebook import Codebook, check_pairwise, gv_level_cap, weight_spectrum
from blindid.pat import ConstantBler
from blindid.receiver import MseRule, calibrate_two_look, mse_threshold


def _write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _data_lines(path):
    return [
        ln for ln in path.read_text().strip().split("\n")
        if not ln.startswith("#")
    ]


# --- config plumbing ---


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "n=8\nbogus=3\n")
    code = main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o.csv")])
    assert code == 2
    assert "bogus" in capsys.readouterr().err


def test_duplicate_key_rejected(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "n=8\nn=9\n")
    code = main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o.csv")])
    assert code == 2
    assert "duplicate" in capsys.readouterr().err


def test_malformed_line_rejected(tmp_path):
    cfg = _write_cfg(tmp_path, "n 8\n")
    assert main(["spectrum", "--config", cfg, "--out", "o.csv"]) == 2


def test_missing_required_key(tmp_path):
    cfg = _write_cfg(tmp_path, "")
    assert main(["spectrum", "--config", cfg, "--out", "o.csv"]) == 2


def test_missing_out_path(tmp_path):
    cfg = _write_cfg(tmp_path, "n=4\n")
    assert main(["spectrum", "--config", cfg]) == 2


def test_unknown_preset(capsys):
    assert main(["simulate", "--preset", "nope", "--out", "o.csv"]) == 2
    assert "preset" in capsys.readouterr().err


def test_preset_command_mismatch(capsys):
    assert main(["spectrum", "--preset", "fig3", "--out", "o.csv"]) == 2


def test_unwritable_output_is_runtime_error(tmp_path):
    cfg = _write_cfg(tmp_path, "n=4\n")
    code = main(
        ["spectrum", "--config", cfg, "--out", "/nonexistent-dir/x/y.csv"]
    )
    assert code == 3


# --- spectrum ---


def test_spectrum_n2_rows(tmp_path):
    out = tmp_path / "s2.csv"
    cfg = _write_cfg(tmp_path, "n=2\n")
    assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    assert _data_lines(out) == ["d,A_d,N_d", "0,4,16", "2,8,12", "4,4,4"]
    assert (tmp_path / "s2.png").exists()


def test_spectrum_n1_single_row(tmp_path):
    out = tmp_path / "s1.csv"
    cfg = _write_cfg(tmp_path, "n=1\n")
    assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    assert _data_lines(out) == ["d,A_d,N_d", "1,4,4"]


def test_spectrum_exact_mode_guard(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "n=17\nmode=exact\n")
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o.csv")]) == 2
    assert "exact" in capsys.readouterr().err


def test_spectrum_auto_switches_to_log(tmp_path):
    out = tmp_path / "s20.csv"
    cfg = _write_cfg(tmp_path, "n=20\n")
    assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    lines = out.read_text().split("\n")
    assert "# mode=log_domain" in lines
    assert _data_lines(out)[0] == "d,log2_A_d,N_d"


def test_spectrum_deterministic(tmp_path):
    cfg = _write_cfg(tmp_path, "n=6\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["spectrum", "--config", cfg, "--out", str(a)]) == 0
    assert main(["spectrum", "--config", cfg, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


# --- bounds ---


def test_bounds_rows_match_library(tmp_path):
    out = tmp_path / "b.csv"
    cfg = _write_cfg(tmp_path, "n_list=8,12\nM=16\nlambda1=0.02\n")
    assert main(["bounds", "--config", cfg, "--out", str(out)]) == 0
    lines = _data_lines(out)
    assert lines[0] == "n,M,P,lambda1,rule,metric,d,value"
    # 5 level fractions + gv + approx per n
    assert len(lines) == 1 + 2 * 7
    for n in (8, 12):
        rule = MseRule(threshold=mse_threshold(n, 0.02))
        spectrum = weight_spectrum(n, "exact")
        rows = [ln.split(",") for ln in lines[1:] if ln.split(",")[0] == str(n)]
        for parts in rows:
            metric, d_str, val = parts[5], parts[6], float(parts[7])
            if metric == "lambda2_at_level":
                want = type2_rate_at_level(n, 1.0, int(d_str), rule)
            elif metric == "lambda2_gv":
                assert int(d_str) == gv_level_cap(spectrum, 16)
                want = type2_rate_gv(spectrum, 16, 1.0, rule)
            else:
                assert d_str == ""
                want = type2_rate_spectrum_avg(spectrum, 1.0, rule)
            assert abs(val - want) < 1e-12, parts


def test_bounds_deterministic(tmp_path):
    cfg = _write_cfg(tmp_path, "n_list=8\nM=10\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["bounds", "--config", cfg, "--out", str(a)]) == 0
    assert main(["bounds", "--config", cfg, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_bounds_two_look_rule(tmp_path):
    out = tmp_path / "b.csv"
    cfg = _write_cfg(
        tmp_path, "n_list=16\nM=10\nrule=two_look\nbler=constant:0.3\n"
    )
    assert main(["bounds", "--config", cfg, "--out", str(out)]) == 0
    assert any("two_look" in ln for ln in _data_lines(out)[1:])


# --- simulate ---


def test_simulate_rejects_zero_trials(tmp_path):
    cfg = _write_cfg(tmp_path, "n_list=8\nM_list=4\ntrials=0\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o.csv")]) == 2


def test_simulate_pat_needs_bler(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "mode=pat\nn_list=8\nM_list=4\ntrials=10\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o.csv")]) == 2
    assert "bler" in capsys.readouterr().err


def test_simulate_two_look_needs_compatible_fading(tmp_path):
    cfg = _write_cfg(
        tmp_path, "n_list=8\nM_list=4\ntrials=10\nrule=two_look\nfading=fixed:1\n"
    )
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o.csv")]) == 2


def test_simulate_rates_deterministic_across_workers(tmp_path):
    cfg = _write_cfg(tmp_path, "n_list=8\nM_list=4\ntrials=600\n")
    paths = [tmp_path / f"{k}.csv" for k in "abc"]
    assert main(["simulate", "--config", cfg, "--out", str(paths[0]), "--seed", "9"]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(paths[1]), "--seed", "9"]) == 0
    assert main(
        ["simulate", "--config", cfg, "--out", str(paths[2]), "--seed", "9",
         "--workers", "3"]
    ) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes() == paths[2].read_bytes()
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "c.png").read_bytes()
    lines = _data_lines(paths[0])
    assert lines[0].startswith("n,M,P,lambda1,rule,fading,metric")
    assert len(lines) == 4
    assert "# seed=9" in paths[0].read_text()


def test_simulate_seed_changes_output(tmp_path):
    cfg = _write_cfg(tmp_path, "n_list=8\nM_list=4\ntrials=600\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--config", cfg, "--out", str(a), "--seed", "1"]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b), "--seed", "2"]) == 0
    assert a.read_bytes() != b.read_bytes()


def test_simulate_gv_codebook_and_sampled_pairs(tmp_path):
    out = tmp_path / "o.csv"
    cfg = _write_cfg(
        tmp_path,
        "n_list=8\nM_list=6\ntrials=400\ncodebook=gv\npairs=2\n",
    )
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    avg_row = [ln for ln in _data_lines(out) if ",type2_avg," in ln][0]
    assert avg_row.split(",")[-1] == "800"


def test_simulate_pat_mode_runs(tmp_path):
    out = tmp_path / "p.csv"
    cfg = _write_cfg(
        tmp_path,
        "mode=pat\nn_list=12\nM_list=4\ntrials=800\nlambda1_list=0.1\n"
        "bler=constant:0.5\n",
    )
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    lines = _data_lines(out)
    assert lines[0].startswith("n,M,P,lambda1,trials,analytic_p1_bound")
    assert len(lines) == 2
    assert (tmp_path / "p.png").exists()


def test_preset_with_overrides(tmp_path):
    out = tmp_path / "f.csv"
    cfg = _write_cfg(tmp_path, "M_list=4,6\ntrials=200\npairs=2\nn_list=8\n")
    assert main(
        ["simulate", "--preset", "flatness", "--config", cfg, "--out", str(out)]
    ) == 0
    lines = _data_lines(out)
    # config file overrides the preset sweep: 2 points x 3 metrics
    assert len(lines) == 1 + 6
    assert {ln.split(",")[1] for ln in lines[1:]} == {"4", "6"}


# --- calibrate ---


def test_calibrate_prints_library_values(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "n=16\nlambda1=0.05\n")
    assert main(["calibrate", "--config", cfg]) == 0
    out_text = capsys.readouterr().out
    calib = calibrate_two_look(16, 1.0, 0.05)
    assert f"threshold={calib.rule.threshold:.12g}" in out_text
    assert f"h_bar={calib.rule.estimate_threshold:.12g}" in out_text
    assert f"weak_fade_cutoff={calib.weak_fade_cutoff:.12g}" in out_text
    assert f"p1_bound={calib.p1_bound:.12g}" in out_text
    assert calib.p1_bound <= 0.05 + 1e-12


def test_calibrate_constant_one_bler(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "n=16\nlambda1=0.05\nbler=constant:1\n")
    assert main(["calibrate", "--config", cfg]) == 0
    out_text = capsys.readouterr().out
    calib = calibrate_two_look(16, 1.0, 0.05, bler_lb=ConstantBler(1.0))
    assert f"h_bar={calib.rule.estimate_threshold:.12g}" in out_text


def test_calibrate_csv_and_worker_invariance(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "n=16\nlambda1=0.02\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["calibrate", "--config", cfg, "--out", str(a)]) == 0
    first = capsys.readouterr().out
    assert main(
        ["calibrate", "--config", cfg, "--out", str(b), "--workers", "8"]
    ) == 0
    second = capsys.readouterr().out
    assert a.read_bytes() == b.read_bytes()
    assert [ln for ln in first.split("\n") if "=" in ln] == [
        ln for ln in second.split("\n") if "=" in ln
    ]
    lines = _data_lines(a)
    assert lines[0].startswith("n,P,lambda1,bler")
    assert len(lines) == 2


# --- construct ---


def test_construct_saves_valid_codebook(tmp_path, capsys):
    out = tmp_path / "book.txt"
    cfg = _write_cfg(tmp_path, "n=8\nM=16\n")
    assert main(["construct", "--config", cfg, "--out", str(out), "--seed", "3"]) == 0
    assert "level_cap=" in capsys.readouterr().out
    book = Codebook.load(out)
    assert book.config.n == 8 and book.config.M == 16
    cap = gv_level_cap(weight_spectrum(8, "exact"), 16)
    ok, worst, _ = check_pairwise(book, level_cap=cap)
    assert ok, worst


def test_construct_deterministic(tmp_path):
    cfg = _write_cfg(tmp_path, "n=8\nM=8\n")
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(["construct", "--config", cfg, "--out", str(a), "--seed", "4"]) == 0
    assert main(["construct", "--config", cfg, "--out", str(b), "--seed", "4"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_construct_budget_exhaustion_is_runtime_error(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "n=2\nM=16\nlevel_cap=0\n")
    assert main(["construct", "--config", cfg, "--out", str(tmp_path / "x.txt")]) == 3
    assert "budget" in capsys.readouterr().err
