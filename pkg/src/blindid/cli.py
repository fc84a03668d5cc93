"""Configuration-driven experiment runner.

Commands: spectrum, bounds, simulate, calibrate, construct.  Parameters
come from a flat key=value config file, a named preset, and the
command-line flags, in increasing priority.  Every CSV starts with a
comment header recording the resolved configuration (and master seed
where randomness is involved) so outputs are self-describing; the
worker count is deliberately not recorded because it must never change
a result.  Commands that write a CSV report also render a PNG figure
next to it, same stem.

Exit codes: 0 success, 2 configuration or validation error, 3 runtime
failure (infeasible calibration, exhausted construction budget,
unwritable output).
"""

from __future__ import annotations

import argparse
import sys
from itertools import product
from pathlib import Path

import numpy as np

from blindid.analysis import (
    pat_type1_bound,
    type2_rate_at_level,
    type2_rate_gv,
    type2_rate_spectrum_avg,
)
from blindid.channel import (
    FixedCoefficient,
    FixedMagnitudeUniformPhase,
    Rayleigh,
    TruncatedRayleigh,
)
from blindid.codebook import (
    CodeConfig,
    greedy_gv_codebook,
    gv_level_cap,
    random_codebook,
    weight_spectrum,
)
from blindid.montecarlo import (
    RATES_CSV_HEADER,
    ExperimentPlan,
    _rule_label,
    rates_csv_rows,
    run_experiment,
)
from blindid.pat import (
    ConstantBler,
    NormalApproxBler,
    PatSweepPoint,
    StepBler,
    load_bler_table,
    pat_report,
    simulate_pat,
)
from blindid.receiver import MseRule, calibrate_two_look, mse_threshold


class ConfigError(ValueError):
    """Configuration is malformed or out of range."""


_COMMON_KEYS = {"out", "seed", "workers"}
_COMMAND_KEYS = {
    "spectrum": {"n", "mode"},
    "bounds": {
        "n_list", "M", "P", "lambda1", "rule", "bler", "fading",
        "level_fractions",
    },
    "simulate": {
        "mode", "n_list", "M_list", "lambda1_list", "P", "trials", "rule",
        "fading", "codebook", "pairs", "bler",
    },
    "calibrate": {"n", "P", "lambda1", "fading", "bler", "mse_budget_fraction"},
    "construct": {"n", "M", "P", "level_cap", "attempt_budget"},
}
_DEFAULTS = {
    "spectrum": {"mode": "auto"},
    "bounds": {
        "M": "100", "P": "1", "lambda1": "0.01", "rule": "mse",
        "bler": "none", "fading": "rayleigh",
        "level_fractions": "0,0.25,0.5,0.75,1",
    },
    "simulate": {
        "mode": "rates", "M_list": "100", "lambda1_list": "0.01", "P": "1",
        "trials": "10000", "rule": "mse", "fading": "rayleigh",
        "codebook": "random", "pairs": "all", "bler": "none",
    },
    "calibrate": {
        "P": "1", "fading": "rayleigh", "bler": "none",
        "mse_budget_fraction": "0.5",
    },
    "construct": {"P": "1"},
}
_PRESETS = {
    "fig3": (
        "simulate",
        {
            "mode": "rates", "n_list": "16,24,32", "M_list": "100",
            "lambda1_list": "0.01", "trials": "20000", "rule": "mse",
            "codebook": "random",
        },
    ),
    "flatness": (
        "simulate",
        {
            "mode": "rates", "n_list": "64", "M_list": "10,100,1000",
            "lambda1_list": "0.01", "trials": "10000", "pairs": "16",
        },
    ),
    "pat-sweep": (
        "simulate",
        {
            "mode": "pat", "n_list": "64", "M_list": "20",
            "lambda1_list": "0.1,0.01,0.001", "trials": "20000",
            "rule": "two_look", "bler": "normal:128:64",
        },
    ),
    "type2-sweep": (
        "bounds",
        {"n_list": "16,32,64,128", "M": "100", "lambda1": "0.01"},
    ),
}


def _parse_config_file(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _resolve_config(args) -> dict[str, str]:
    command = args.command
    cfg = dict(_DEFAULTS[command])
    if args.preset is not None:
        if args.preset not in _PRESETS:
            raise ConfigError(
                f"unknown preset {args.preset!r}; "
                f"available: {', '.join(sorted(_PRESETS))}"
            )
        preset_cmd, overrides = _PRESETS[args.preset]
        if preset_cmd != command:
            raise ConfigError(
                f"preset {args.preset!r} belongs to command {preset_cmd!r}"
            )
        cfg.update(overrides)
    if args.config is not None:
        cfg.update(_parse_config_file(args.config))
    if args.out is not None:
        cfg["out"] = args.out
    if args.seed is not None:
        cfg["seed"] = str(args.seed)
    if args.workers is not None:
        cfg["workers"] = str(args.workers)
    allowed = _COMMAND_KEYS[command] | _COMMON_KEYS
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) for {command}: {', '.join(unknown)}; "
            f"allowed: {', '.join(sorted(allowed))}"
        )
    return cfg


def _get_int(cfg, key, minimum=None, required=True, default=None):
    if key not in cfg:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        val = int(cfg[key])
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {cfg[key]!r}")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {val}")
    return val


def _get_float(cfg, key, lo=None, hi=None):
    try:
        val = float(cfg[key])
    except KeyError:
        raise ConfigError(f"missing required key {key!r}")
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {cfg[key]!r}")
    if lo is not None and not val > lo:
        raise ConfigError(f"{key} must be > {lo}, got {val}")
    if hi is not None and not val < hi:
        raise ConfigError(f"{key} must be < {hi}, got {val}")
    return val


def _get_list(cfg, key, convert, what):
    try:
        raw = cfg[key]
    except KeyError:
        raise ConfigError(f"missing required key {key!r}")
    try:
        vals = [convert(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"{key} must be comma-separated {what}, got {raw!r}")
    if not vals:
        raise ConfigError(f"{key} must not be empty")
    return vals


def _get_fading(cfg):
    raw = cfg["fading"]
    kind, _, rest = raw.partition(":")
    try:
        if kind == "rayleigh" and not rest:
            return Rayleigh()
        if kind == "fixed":
            return FixedMagnitudeUniformPhase(float(rest))
        if kind == "coeff":
            return FixedCoefficient(complex(rest))
        if kind == "truncated":
            lo, hi = rest.split(":")
            return TruncatedRayleigh(float(lo), float(hi))
    except ValueError as exc:
        raise ConfigError(f"bad fading value {raw!r}: {exc}")
    raise ConfigError(
        f"bad fading value {raw!r}; expected rayleigh, fixed:<mag>, "
        f"coeff:<complex>, or truncated:<min_power>:<max_power>"
    )


def _get_bler(cfg):
    raw = cfg["bler"]
    kind, _, rest = raw.partition(":")
    try:
        if kind == "none" and not rest:
            return None
        if kind == "normal":
            n_str, k_str = rest.split(":")
            return NormalApproxBler(int(n_str), int(k_str))
        if kind == "constant":
            return ConstantBler(float(rest))
        if kind == "step":
            return StepBler(float(rest))
        if kind == "table":
            return load_bler_table(rest)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"bad bler value {raw!r}: {exc}")
    raise ConfigError(
        f"bad bler value {raw!r}; expected none, normal:<N>:<K>, "
        f"constant:<p>, step:<snr_db>, or table:<path>"
    )


def _get_rule_kind(cfg):
    kind = cfg["rule"]
    if kind not in ("mse", "two_look"):
        raise ConfigError(f"rule must be mse or two_look, got {kind!r}")
    return kind


def _get_out(cfg, required=True):
    out = cfg.get("out")
    if out is None and required:
        raise ConfigError("missing required output path (--out or out=...)")
    return out


def _make_rule(kind, n, power, lam, fading, bler):
    """An mse rule at the full budget, or a calibrated two-look rule."""
    if kind == "mse":
        return MseRule(threshold=mse_threshold(n, lam)), None
    if not isinstance(fading, (Rayleigh, TruncatedRayleigh)):
        raise ConfigError(
            "two_look calibration needs a rayleigh or truncated fading model"
        )
    calib = calibrate_two_look(n, power, lam, fading, bler)
    return calib.rule, calib


def _auto_spectrum(n):
    return weight_spectrum(n, "exact" if n <= 16 else "log_domain")


def _header_lines(command, cfg, keys):
    lines = [f"# command={command}"]
    for key in sorted(keys):
        if key in cfg:
            lines.append(f"# {key}={cfg[key]}")
    return lines


def _write_output(out_path, lines, fig=None):
    path = Path(out_path)
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")
    if fig is not None:
        from blindid import plotting

        png = path.with_suffix(".png")
        plotting.save_figure(fig, png)
        print(f"wrote {png}")


def cmd_spectrum(cfg) -> None:
    n = _get_int(cfg, "n", minimum=1)
    mode = cfg["mode"]
    if mode == "auto":
        mode = "exact" if n <= 16 else "log_domain"
    if mode not in ("exact", "log_domain"):
        raise ConfigError(f"mode must be auto, exact, or log_domain, got {mode!r}")
    if mode == "exact" and n > 16:
        raise ConfigError("exact mode requires n <= 16; use log_domain")
    out = _get_out(cfg)

    spectrum = weight_spectrum(n, mode)
    lines = _header_lines("spectrum", {**cfg, "mode": mode}, ("n", "mode"))
    lines += spectrum.csv_lines()
    from blindid import plotting

    _write_output(out, lines, plotting.spectrum_figure(spectrum))


def cmd_bounds(cfg) -> None:
    n_list = _get_list(cfg, "n_list", int, "integers")
    if any(n < 2 for n in n_list):
        raise ConfigError("n_list entries must be >= 2")
    M = _get_int(cfg, "M", minimum=2)
    power = _get_float(cfg, "P", lo=0.0)
    lam = _get_float(cfg, "lambda1", lo=0.0, hi=1.0)
    fractions = _get_list(cfg, "level_fractions", float, "fractions")
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise ConfigError("level_fractions must lie in [0, 1]")
    rule_kind = _get_rule_kind(cfg)
    fading = _get_fading(cfg)
    bler = _get_bler(cfg)
    out = _get_out(cfg)

    header_keys = (
        "n_list", "M", "P", "lambda1", "rule", "bler", "fading",
        "level_fractions",
    )
    lines = _header_lines("bounds", cfg, header_keys)
    lines.append("n,M,P,lambda1,rule,metric,d,value")
    fig_rows = []
    for n in n_list:
        rule, _ = _make_rule(rule_kind, n, power, lam, fading, bler)
        spectrum = _auto_spectrum(n)
        label = _rule_label(rule)
        prefix = f"{n},{M},{power:g},{lam:g},{label}"
        for frac in fractions:
            d = round(frac * n * n)
            value = type2_rate_at_level(n, power, d, rule, fading)
            lines.append(f"{prefix},lambda2_at_level,{d},{value:.12g}")
            fig_rows.append((n, "lambda2_at_level", d, value))
        cap = gv_level_cap(spectrum, M)
        gv_value = type2_rate_gv(spectrum, M, power, rule, fading)
        lines.append(f"{prefix},lambda2_gv,{cap},{gv_value:.12g}")
        fig_rows.append((n, "lambda2_gv", cap, gv_value))
        avg = type2_rate_spectrum_avg(spectrum, power, rule, fading)
        lines.append(f"{prefix},lambda2_approx,,{avg:.12g}")
        fig_rows.append((n, "lambda2_approx", None, avg))
    from blindid import plotting

    _write_output(out, lines, plotting.bounds_figure(fig_rows))


def cmd_simulate(cfg) -> None:
    sim_mode = cfg["mode"]
    if sim_mode not in ("rates", "pat"):
        raise ConfigError(f"mode must be rates or pat, got {sim_mode!r}")
    n_list = _get_list(cfg, "n_list", int, "integers")
    M_list = _get_list(cfg, "M_list", int, "integers")
    lam_list = _get_list(cfg, "lambda1_list", float, "numbers")
    if any(n < 2 for n in n_list) or any(m < 2 for m in M_list):
        raise ConfigError("n_list and M_list entries must be >= 2")
    if any(not 0.0 < l < 1.0 for l in lam_list):
        raise ConfigError("lambda1_list entries must lie in (0, 1)")
    power = _get_float(cfg, "P", lo=0.0)
    trials = _get_int(cfg, "trials", minimum=1)
    rule_kind = _get_rule_kind(cfg)
    fading = _get_fading(cfg)
    bler = _get_bler(cfg)
    seed = _get_int(cfg, "seed", minimum=0, required=False, default=0)
    workers = _get_int(cfg, "workers", minimum=1, required=False, default=1)
    book_kind = cfg["codebook"]
    if book_kind not in ("random", "gv"):
        raise ConfigError(f"codebook must be random or gv, got {book_kind!r}")
    pairs_raw = cfg["pairs"]
    pair_count = None
    if pairs_raw != "all":
        try:
            pair_count = int(pairs_raw)
        except ValueError:
            raise ConfigError(f"pairs must be 'all' or an integer, got {pairs_raw!r}")
    if sim_mode == "pat" and bler is None:
        raise ConfigError("pat mode needs a bler model (bler=...)")
    out = _get_out(cfg)

    header_keys = (
        "mode", "n_list", "M_list", "lambda1_list", "P", "trials", "rule",
        "fading", "codebook", "pairs", "bler", "seed",
    )
    lines = _header_lines("simulate", {**cfg, "seed": str(seed)}, header_keys)
    fig_rows = []
    sweep = list(product(n_list, M_list, lam_list))
    if len(n_list) > 1:
        x_key, x_of = "n", lambda n, m, l: n
    elif len(M_list) > 1:
        x_key, x_of = "M", lambda n, m, l: m
    else:
        x_key, x_of = "lambda1", lambda n, m, l: l
    pat_points = []
    rate_rows = []
    for idx, (n, M, lam) in enumerate(sweep):
        code_cfg = CodeConfig(n=n, M=M, P=power)
        rng = np.random.default_rng([seed, idx])
        if book_kind == "random":
            book = random_codebook(code_cfg, rng)
        else:
            cap = gv_level_cap(_auto_spectrum(n), M)
            book = greedy_gv_codebook(code_cfg, cap, rng)
        rule, calib = _make_rule(rule_kind, n, power, lam, fading, bler)
        if sim_mode == "rates":
            plan = ExperimentPlan(
                book, rule, fading, trials, seed, pair_sample_count=pair_count
            )
            rates = run_experiment(plan, workers=workers)
            rate_rows += rates_csv_rows(plan, rates, lam)
            x = x_of(n, M, lam)
            for metric, est in (
                ("type1", rates.type1),
                ("type2_max", rates.type2_max),
                ("type2_avg", rates.type2_avg),
            ):
                fig_rows.append((x, metric, est.value, est.ci_low, est.ci_high))
        else:
            sim = simulate_pat(
                book, calib if calib is not None else rule, fading, bler,
                trials, seed, pair_sample_count=pair_count, workers=workers,
            )
            analytic_p1 = pat_type1_bound(n, power, rule, fading, bler)
            analytic_p2 = type2_rate_spectrum_avg(
                _auto_spectrum(n), power, rule, fading
            )
            pat_points.append(
                PatSweepPoint(
                    n=n, M=M, power=power, lambda1=lam, trials=trials,
                    analytic_p1_bound=analytic_p1, analytic_p2_avg=analytic_p2,
                    simulated=sim,
                )
            )
            fig_rows.append(
                (
                    lam, analytic_p1, sim.p1_overall.value,
                    sim.p1_overall.ci_low, sim.p1_overall.ci_high,
                )
            )
    from blindid import plotting

    if sim_mode == "rates":
        lines.append(RATES_CSV_HEADER)
        lines += rate_rows
        fig = plotting.rates_figure(fig_rows, x_key)
    else:
        lines += pat_report(pat_points).strip().split("\n")
        fig = plotting.pat_figure(fig_rows)
    _write_output(out, lines, fig)


def cmd_calibrate(cfg) -> None:
    n = _get_int(cfg, "n", minimum=2)
    power = _get_float(cfg, "P", lo=0.0)
    lam = _get_float(cfg, "lambda1", lo=0.0, hi=1.0)
    frac = _get_float(cfg, "mse_budget_fraction", lo=0.0, hi=1.0)
    fading = _get_fading(cfg)
    if not isinstance(fading, (Rayleigh, TruncatedRayleigh)):
        raise ConfigError(
            "two_look calibration needs a rayleigh or truncated fading model"
        )
    bler = _get_bler(cfg)
    out = _get_out(cfg, required=False)

    calib = calibrate_two_look(
        n, power, lam, fading, bler, mse_budget_fraction=frac
    )
    print(f"threshold={calib.rule.threshold:.12g}")
    print(f"h_bar={calib.rule.estimate_threshold:.12g}")
    print(f"weak_fade_cutoff={calib.weak_fade_cutoff:.12g}")
    print(f"p1_bound={calib.p1_bound:.12g}")
    if out is not None:
        keys = ("n", "P", "lambda1", "fading", "bler", "mse_budget_fraction")
        lines = _header_lines("calibrate", cfg, keys)
        lines.append(
            "n,P,lambda1,bler,mse_budget_fraction,"
            "threshold,h_bar,weak_fade_cutoff,p1_bound"
        )
        lines.append(
            f"{n},{power:g},{lam:g},{cfg['bler']},{frac:g},"
            f"{calib.rule.threshold:.12g},{calib.rule.estimate_threshold:.12g},"
            f"{calib.weak_fade_cutoff:.12g},{calib.p1_bound:.12g}"
        )
        _write_output(out, lines)


def cmd_construct(cfg) -> None:
    n = _get_int(cfg, "n", minimum=2)
    M = _get_int(cfg, "M", minimum=2)
    power = _get_float(cfg, "P", lo=0.0)
    seed = _get_int(cfg, "seed", minimum=0, required=False, default=0)
    level_cap = _get_int(cfg, "level_cap", minimum=0, required=False)
    budget = _get_int(cfg, "attempt_budget", minimum=1, required=False)
    out = _get_out(cfg)
    code_cfg = CodeConfig(n=n, M=M, P=power)

    if level_cap is None:
        level_cap = gv_level_cap(_auto_spectrum(n), M)
    book = greedy_gv_codebook(
        code_cfg, level_cap, np.random.default_rng([seed, 0]), budget
    )
    book.save(out)
    print(
        f"saved codebook {out}: n={n} M={M} P={power:g} "
        f"level_cap={level_cap} seed={seed}"
    )


_COMMANDS = {
    "spectrum": cmd_spectrum,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "construct": cmd_construct,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blindid",
        description=(
            "Deterministic identification codes over block fading channels: "
            "spectra, error bounds, Monte Carlo experiments."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("spectrum", "write the QPSK pair-level spectrum table"),
        ("bounds", "write analytical type-II rate tables"),
        ("simulate", "run Monte Carlo experiments"),
        ("calibrate", "calibrate the two-look rule"),
        ("construct", "build and save a greedy codebook"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--out", help="output CSV (or codebook) path")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--workers", type=int, help="parallel worker count")
        p.add_argument("--preset", help="named parameter preset")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary: map to exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
