"""Experiment harness: ``kp2 <experiment> --config <file> [--set key=value ...] [--out dir]``.

Each experiment reads its own INI section; every key has a default and
unknown keys are rejected.  Results are computed in memory first, so a
config or parameter error (exit 2) leaves no artifacts behind.  Exit 3
signals a numerical refinement failure and exit 1 a failed acceptance gate.
"""
from __future__ import annotations

import argparse
import configparser
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
import sys
import time

from .fitting import FitResult, loglog_svg, thread_count, write_csv, write_json
from .field import RefinementError, read_field
from .flatsets import NotBracketedError
from .lattice import DomainError, TorusSpec
from .solver import InstabilityError

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_REFINE = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# typed values

def _int(s: str) -> int:
    return int(s.strip())


def _float(s: str) -> float:
    # accepts decimals and exact ratios such as 1/8
    return float(Fraction(s.strip()))


def _frac(s: str) -> Fraction:
    return Fraction(s.strip())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _str(s: str) -> str:
    return s.strip()


def _list(conv):
    def parse(s: str):
        items = [x for x in s.replace(" ", "").split(",") if x]
        if not items:
            raise ValueError("empty list")
        return [conv(x) for x in items]
    parse.__name__ = f"list[{conv.__name__.strip('_')}]"
    return parse


_ints, _floats = _list(_int), _list(_float)


def _show(v):
    """Config echo: fractions as strings, everything else JSON-native."""
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, list):
        return [_show(x) for x in v]
    return v


@dataclass
class Param:
    parse: object
    default: str
    doc: str


COMMON = {
    "threads": Param(_int, "0", "worker threads; 0 means all cores, KP2_THREADS overrides"),
}
TORUS = {"gamma": Param(_frac, "1", "torus aspect ratio in (1/2, 1]")}

EXPERIMENTS: dict[str, dict[str, Param]] = {
    "strichartz-linear": {
        **TORUS,
        "N_list": Param(_ints, "64,128,256,512,1024,2048,4096", "dyadic frequencies"),
        "slope_min": Param(_float, "0.105", "gate: lower slope bound"),
        "slope_max": Param(_float, "0.145", "gate: upper slope bound"),
    },
    "strichartz-short": {
        **TORUS,
        "N_list": Param(_ints, "64,128,256,512,1024,2048,4096", "dyadic frequencies"),
        "alpha": Param(_float, "1/2", "time window N^-alpha"),
        "eta_factor": Param(_float, "1/16", "comb height cap as a multiple of N^2"),
        "slope_min": Param(_float, "0.04", "gate: lower slope bound"),
        "slope_max": Param(_float, "0.085", "gate: upper slope bound"),
    },
    "strichartz-shifted": {
        **TORUS,
        "N": Param(_int, "16", "x-frequency shell"),
        "k_list": Param(_ints, "1,2,4,8,16", "band shift multiples"),
        "seeds": Param(_ints, "0,1,2", "random band seeds, median taken"),
        "scale": Param(_float, "1", "band height as a multiple of N^2"),
        "slope_max": Param(_float, "0.12", "gate: upper slope bound in k"),
    },
    "bilinear-suite": {
        "n_cases": Param(_int, "1000", "random cases"),
        "seed": Param(_int, "0", "suite seed"),
        "N_max": Param(_int, "128", "largest dyadic frequency"),
        "eps": Param(_float, "0.01", "epsilon loss in the general bound"),
        "max_constant": Param(_float, "8", "gate: largest empirical constant"),
        "covariance_cases": Param(_int, "30", "random pairs for the shear covariance check"),
        "covariance_tol": Param(_float, "1e-10", "gate: relative covariance defect"),
    },
    "bilinear-sharpness": {
        "N2_list": Param(_ints, "16,32,64,128,256,512,1024", "low frequency shells"),
        "N1_ratio": Param(_int, "4", "N1 = N1_ratio * N2"),
        "dtau": Param(_frac, "1/8", "modulation cell width 1/m"),
        "slope_min": Param(_float, "0.20", "gate: lower slope bound"),
        "slope_max": Param(_float, "0.30", "gate: upper slope bound"),
    },
    "counting-suite": {
        "n_cases": Param(_int, "1000", "random cases"),
        "seed": Param(_int, "0", "suite seed"),
        "N_max": Param(_int, "128", "largest dyadic frequency"),
        "max_constant": Param(_float, "8", "gate: largest empirical constant"),
    },
    "flatset-probe": {
        "point": Param(_floats, "1,0", "base point (xi, eta) of the generic probes"),
        "degenerate_point": Param(_floats, "1,1.7320508075688772",
                                  "base point where the xi-direction curvature vanishes"),
        "k_min": Param(_int, "6", "smallest exponent k in delta = 2^-k"),
        "k_max": Param(_int, "20", "largest exponent k in delta = 2^-k"),
        "generic_target": Param(_float, "1/2", "expected generic exponent"),
        "degenerate_target": Param(_float, "1/3", "expected degenerate exponent"),
        "tolerance": Param(_float, "0.05", "gate: allowed exponent deviation"),
    },
    "flatset-cover": {
        "k_list": Param(_ints, "10,14", "cover scales delta = 2^-k"),
        "domain": Param(_floats, "1,2,-1,1", "xi0, xi1, eta0, eta1"),
        "overlap_C": Param(_float, "2", "gate: overlap <= overlap_C * log(1/delta)"),
        "sample": Param(_int, "64", "sample grid per axis for misses and overlap"),
        "seed": Param(_int, "0", "sampling seed"),
    },
    "spaces-suite": {
        "seed": Param(_int, "1", "embedding probe seed"),
        "N_list": Param(_ints, "8,16,32,64,128,256", "dyadic frequencies"),
        "alpha": Param(_float, "1/2", "localization exponent"),
        "T": Param(_float, "1", "time horizon of the embedding probe"),
        "n_seeds": Param(_int, "3", "random samples per point"),
        "slack_b": Param(_float, "0", "modulation exponent b < 1/2"),
        "slack_T_list": Param(_floats, "1/4,1/8,1/16,1/32,1/64", "slack horizons"),
        "slack_N": Param(_int, "16", "slack probe frequency"),
        "slack_seed": Param(_int, "0", "slack probe seed"),
        "embedding_max": Param(_float, "0.05", "gate: |embedding slope| bound"),
        "slack_min": Param(_float, "0.4", "gate: slack slope lower bound"),
    },
    "solve": {
        **TORUS,
        "initial": Param(_str, "", "field file; empty means smooth random data"),
        "seed": Param(_int, "1", "seed of the random data"),
        "box": Param(_int, "4", "random data frequency box"),
        "amplitude": Param(_float, "0.5", "random data amplitude"),
        "T_end": Param(_float, "1", "final time"),
        "dt": Param(_float, "1/256", "time step; 0 picks the heuristic stable step"),
        "nx": Param(_int, "64", "x grid size"),
        "ny": Param(_int, "64", "y grid size"),
        "sign": Param(_int, "1", "nonlinearity sign, +1 or -1"),
        "observe_every": Param(_int, "16", "steps between observer rows"),
        "mass_tol": Param(_float, "1e-8", "gate: relative mass drift"),
        "order_study": Param(_bool, "false", "also measure the RK4 order"),
        "order_min": Param(_float, "3.5", "gate: lower order bound"),
        "order_max": Param(_float, "4.5", "gate: upper order bound"),
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    parameters: dict
    output_dir: Path

    def echo(self) -> dict:
        return {k: _show(v) for k, v in self.parameters.items()}


def _schema(experiment: str) -> dict[str, Param]:
    return {**EXPERIMENTS[experiment], **COMMON}


def resolve_config(experiment: str, config: str | None = None, overrides=(),
                   out: str | None = None) -> ExperimentConfig:
    """Merge defaults, the experiment's INI section and ``key=value`` overrides."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    schema = _schema(experiment)
    raw = {k: p.default for k, p in schema.items()}
    if config is not None:
        cp = configparser.ConfigParser(interpolation=None, default_section="__none__",
                                       inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        path = Path(config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {config}")
        try:
            cp.read_string(path.read_text(), source=str(path))
        except configparser.Error as e:
            raise ConfigError(f"cannot parse {config}: {e}") from None
        for sec in cp.sections():
            if sec not in EXPERIMENTS:
                raise ConfigError(f"unknown section [{sec}] in {config}")
        if cp.has_section(experiment):
            for k, v in cp.items(experiment):
                if k not in schema:
                    raise ConfigError(f"unknown key {k!r} in [{experiment}]")
                raw[k] = v
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip()
        if k not in schema:
            raise ConfigError(f"unknown key {k!r} for {experiment}")
        raw[k] = v
    params = {}
    for k, p in schema.items():
        try:
            params[k] = p.parse(raw[k])
        except (ValueError, ZeroDivisionError) as e:
            raise ConfigError(f"bad value for {k!r}: {raw[k]!r} ({e})") from None
    if "gamma" in params:
        try:
            TorusSpec(params["gamma"])
        except ValueError as e:
            raise ConfigError(str(e)) from None
    out_dir = Path(out) if out else Path("results") / experiment
    return ExperimentConfig(experiment, params, out_dir)


# ---------------------------------------------------------------------------
# experiments

@dataclass
class Outcome:
    header: list
    rows: list
    results: dict
    gates: dict                      # name -> {"value": ..., "pass": bool}
    figure: str | None = None
    extra: dict = field(default_factory=dict)   # file name -> (header, rows)


def _gate(value, ok: bool) -> dict:
    return {"value": value, "pass": bool(ok)}


def _threads(p) -> int | None:
    return p["threads"] or None


def _fit_rows(fit: FitResult) -> list:
    return [list(s) for s in fit.samples]


def _fit_outcome(fit: FitResult, lo, hi, title, xlabel) -> Outcome:
    ok = (lo is None or fit.slope >= lo) and (hi is None or fit.slope <= hi)
    res = fit.summary()
    res["max_refinement_delta"] = max(s[2] for s in fit.samples)
    return Outcome(["abscissa", "ratio", "refinement_delta"], _fit_rows(fit), res,
                   {"slope": _gate(fit.slope, ok)},
                   loglog_svg([s[:2] for s in fit.samples], fit, title, xlabel))


def exp_strichartz_linear(p) -> Outcome:
    from .strichartz import sharpness_linear_fit
    fit = sharpness_linear_fit(p["N_list"], TorusSpec(p["gamma"]), threads=_threads(p))
    return _fit_outcome(fit, p["slope_min"], p["slope_max"], "linear L4 quotient", "N")


def exp_strichartz_short(p) -> Outcome:
    from .strichartz import sharpness_shorttime_fit
    fit = sharpness_shorttime_fit(p["N_list"], p["alpha"], TorusSpec(p["gamma"]),
                                  p["eta_factor"], threads=_threads(p))
    return _fit_outcome(fit, p["slope_min"], p["slope_max"], "short-time L4 quotient", "N")


def exp_strichartz_shifted(p) -> Outcome:
    from .strichartz import shifted_band_fit
    fit = shifted_band_fit(p["N"], p["k_list"], p["seeds"], TorusSpec(p["gamma"]), p["scale"],
                           threads=_threads(p))
    return _fit_outcome(fit, None, p["slope_max"], "shifted band quotient", "k")


def exp_bilinear_sharpness(p) -> Outcome:
    from .bilinear import sharpness_bilinear_fit
    fit = sharpness_bilinear_fit(p["N2_list"], p["N1_ratio"], p["dtau"], threads=_threads(p))
    return _fit_outcome(fit, p["slope_min"], p["slope_max"], "bilinear quotient", "N2")


def _suite_outcome(rows, kinds, header, bound) -> Outcome:
    from .bilinear import suite_max
    res, gates = {}, {}
    for kind in kinds:
        m = suite_max(rows, kind)
        res[f"max_constant_{kind}"] = m
        res[f"cases_{kind}"] = sum(1 for r in rows if r[1] == kind)
        gates[f"max_constant_{kind}"] = _gate(m, m <= bound)
    return Outcome(header, [list(r) for r in rows], res, gates)


def exp_bilinear_suite(p) -> Outcome:
    from .bilinear import bilinear_suite, covariance_suite
    rows = bilinear_suite(p["n_cases"], p["seed"], p["N_max"], p["eps"], threads=_threads(p))
    out = _suite_outcome(rows, ("bourgain", "transversal", "secondorder"),
                         ["case", "kind", "quotient", "bound", "ratio", "branch"],
                         p["max_constant"])
    cov = covariance_suite(p["covariance_cases"], p["seed"], min(p["N_max"], 64))
    out.results["covariance_defect"] = cov
    out.gates["covariance_defect"] = _gate(cov, cov <= p["covariance_tol"])
    return out


def exp_counting_suite(p) -> Outcome:
    from .bilinear import counting_suite
    rows = counting_suite(p["n_cases"], p["seed"], p["N_max"])
    return _suite_outcome(rows, ("transversal", "secondorder"),
                          ["case", "kind", "count", "bound", "ratio"], p["max_constant"])


def exp_flatset_probe(p) -> Outcome:
    from .flatsets import flat_length_fit, kp_degenerate_direction, kp_phase
    if len(p["point"]) != 2 or len(p["degenerate_point"]) != 2:
        raise ConfigError("points need two coordinates")
    if not 1 <= p["k_min"] < p["k_max"]:
        raise ConfigError("need 1 <= k_min < k_max")
    deltas = [2.0 ** -k for k in range(p["k_min"], p["k_max"] + 1)]
    phase = kp_phase()
    pt, dp = tuple(p["point"]), tuple(p["degenerate_point"])
    probes = [("generic_xi", pt, (1.0, 0.0), p["generic_target"]),
              ("generic_eta", pt, (0.0, 1.0), p["generic_target"]),
              ("degenerate_xi", dp, (1.0, 0.0), p["degenerate_target"]),
              ("degenerate_null", pt, tuple(kp_degenerate_direction(*pt)), p["degenerate_target"])]
    rows, res, gates = [], {}, {}
    svg = None
    for name, base, d, target in probes:
        fit = flat_length_fit(phase, base, d, deltas)
        rows += [[name] + list(s) for s in fit.samples]
        res[name] = fit.summary()
        gates[name] = _gate(fit.slope, abs(fit.slope - target) <= p["tolerance"])
        if svg is None:
            svg = loglog_svg([s[:2] for s in fit.samples], fit, "flat length, generic", "delta",
                             "length")
    return Outcome(["series", "abscissa", "ratio", "refinement_delta"], rows, res, gates, svg)


def exp_flatset_cover(p) -> Outcome:
    from .flatsets import cover_report, cover_rows, cover_svg, flat_cover, kp_phase
    if len(p["domain"]) != 4:
        raise ConfigError("domain needs four numbers")
    phase = kp_phase()
    rows, res, gates = [], {}, {}
    first = None
    for k in p["k_list"]:
        cov = flat_cover(phase, 2.0 ** -k, tuple(p["domain"]))
        rep = cover_report(cov, phase, p["sample"], seed=p["seed"])
        first = first or cov
        rows.append([k, rep["rectangles"], rep["misses"], rep["max_overlap"],
                     rep["log_inv_delta"], rep["certified_C"], rep["replay_C"]])
        res[f"delta_2^-{k}"] = rep
        bound = p["overlap_C"] * rep["log_inv_delta"]
        gates[f"overlap_2^-{k}"] = _gate(rep["max_overlap"],
                                         rep["max_overlap"] <= bound and rep["misses"] == 0)
        gates[f"flatness_2^-{k}"] = _gate(rep["certified_C"], rep["certified_C"] <= 1.0)
    header = ["k", "rectangles", "misses", "max_overlap", "log_inv_delta", "certified_C",
              "replay_C"]
    extra = {"rectangles.csv": (["xi0", "xi1", "eta0", "eta1"], cover_rows(first))}
    return Outcome(header, rows, res, gates, cover_svg(first.rects), extra)


def exp_spaces_suite(p) -> Outcome:
    from .spaces import embedding_probe, slack_probe
    emb = embedding_probe(p["seed"], p["N_list"], p["alpha"], p["T"], p["n_seeds"], _threads(p))
    slk = slack_probe(p["slack_b"], p["slack_T_list"], p["slack_seed"], p["slack_N"],
                      p["alpha"], p["n_seeds"], _threads(p))
    rows = [["embedding"] + list(s) for s in emb.samples]
    rows += [["slack"] + list(s) for s in slk.samples]
    res = {"embedding": emb.summary(), "slack": slk.summary()}
    gates = {"embedding_slope": _gate(emb.slope, abs(emb.slope) <= p["embedding_max"]),
             "slack_slope": _gate(slk.slope, slk.slope >= p["slack_min"])}
    svg = loglog_svg([s[:2] for s in emb.samples], emb, "embedding quotient", "N")
    return Outcome(["series", "abscissa", "ratio", "refinement_delta"], rows, res, gates, svg)


def exp_solve(p) -> Outcome:
    from .field import SpectralField
    from .solver import order_study, run, smooth_random_data, stable_dt
    torus = TorusSpec(p["gamma"])
    if p["initial"]:
        path = Path(p["initial"])
        if not path.is_file():
            raise ConfigError(f"initial data file not found: {path}")
        f = read_field(path)
        if f.torus != torus:
            f = SpectralField(f.xi, f.eta, f.amp, torus, f.real)
    else:
        f = smooth_random_data(p["seed"], p["box"], p["amplitude"], torus=torus)
    if p["sign"] not in (1, -1):
        raise ConfigError("sign must be +1 or -1")
    dt = p["dt"] or stable_dt(f, p["nx"], p["ny"])
    tr = run(f, p["T_end"], dt, p["nx"], p["ny"], p["observe_every"], sign=p["sign"])
    table = tr.rows()
    M0 = tr.M[0]
    mdrift = abs(tr.M[-1] - M0) / M0 if M0 else abs(tr.M[-1])
    edrift = max(abs(e - tr.E[0]) for e in tr.E) / (abs(tr.E[0]) + 1)
    res = {"dt": dt, "steps": int(round(p["T_end"] / dt)), "mass": M0, "energy": tr.E[0],
           "mass_drift": mdrift, "energy_drift": edrift,
           "band_sup": {str(k): v for k, v in sorted(tr.band_sup().items())}}
    gates = {"mass_drift": _gate(mdrift, mdrift <= p["mass_tol"])}
    if p["order_study"]:
        dts = [dt / 2 ** j for j in range(4)]
        order, pairs = order_study(f, p["T_end"], dts, p["nx"], p["ny"])
        res["order"] = order
        res["self_convergence"] = pairs
        gates["order"] = _gate(order, p["order_min"] <= order <= p["order_max"])
    pts = [(t, m) for t, m in zip(tr.times, tr.M) if t > 0]
    svg = loglog_svg(pts, None, "mass along the trajectory", "t", "M") if pts else None
    return Outcome(table[0], table[1:], res, gates, svg)


DISPATCH = {
    "strichartz-linear": exp_strichartz_linear,
    "strichartz-short": exp_strichartz_short,
    "strichartz-shifted": exp_strichartz_shifted,
    "bilinear-suite": exp_bilinear_suite,
    "bilinear-sharpness": exp_bilinear_sharpness,
    "counting-suite": exp_counting_suite,
    "flatset-probe": exp_flatset_probe,
    "flatset-cover": exp_flatset_cover,
    "spaces-suite": exp_spaces_suite,
    "solve": exp_solve,
}


def run_experiment(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Compute, then write artifacts; returns (exit status, summary)."""
    t0 = time.perf_counter()
    out = DISPATCH[cfg.experiment](cfg.parameters)
    wall = time.perf_counter() - t0
    passed = all(g["pass"] for g in out.gates.values())
    summary = {"experiment": cfg.experiment, "config": cfg.echo(),
               "threads": thread_count(_threads(cfg.parameters)),
               "results": out.results, "gates": out.gates, "passed": passed,
               "wall_time": wall}
    d = cfg.output_dir
    d.mkdir(parents=True, exist_ok=True)
    write_csv(d / "results.csv", out.header, out.rows)
    for name, (h, rows) in out.extra.items():
        write_csv(d / name, h, rows)
    if out.figure is not None:
        (d / "figure.svg").write_text(out.figure)
    write_json(d / "summary.json", summary)
    return (EXIT_OK if passed else EXIT_GATE), summary


def _describe() -> str:
    lines = ["experiments and keys (defaults):"]
    for name, schema in EXPERIMENTS.items():
        lines.append(f"  [{name}]")
        for k, prm in {**schema, **COMMON}.items():
            lines.append(f"    {k} = {prm.default}    # {prm.doc}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kp2", description="Run a KP-II numerical experiment.",
                                 formatter_class=argparse.RawDescriptionHelpFormatter,
                                 epilog=_describe())
    ap.add_argument("experiment", choices=sorted(EXPERIMENTS))
    ap.add_argument("--config", help="INI file with one section per experiment")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key (repeatable)")
    ap.add_argument("--out", help="output directory (default results/<experiment>)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        cfg = resolve_config(args.experiment, args.config, args.set, args.out)
        status, summary = run_experiment(cfg)
    except (ConfigError, DomainError, ValueError) as e:
        print(f"kp2: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (RefinementError, NotBracketedError, InstabilityError) as e:
        print(f"kp2: refinement failure: {e}", file=sys.stderr)
        return EXIT_REFINE
    for name, g in summary["gates"].items():
        print(f"{'PASS' if g['pass'] else 'FAIL'} {name} = {g['value']}")
    print(f"wrote {cfg.output_dir}")
    return status


if __name__ == "__main__":
    sys.exit(main())
