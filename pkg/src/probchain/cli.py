"""``probchain`` command line: one subcommand per experiment.

Every run writes ``<subcommand>-<seed>-<timestamp>.csv`` (plus table, plot
and histogram files where relevant) and a ``.manifest.json`` with all
resolved parameters.  Parameter precedence: flags, then ``--config`` file
(flat ``key=value`` lines), then the preset defaults.

Exit codes: 0 success, 1 experiment failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import os
import platform
import shlex
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .chain_error import ChainSpec, appendix_table, relative_error_mc
from .cpoisson import FitError, fit_cpoiss_shared, histogram_rows, sample_skewness, sample_sumlog
from .hmm_diagnostic import SCENARIOS, load_hmm, run_scenario
from .lexicon_nn import load_lexicon, run_experiment
from .output import write_csv, write_manifest, write_plot_data
from .parallel import map_units
from .sampling import NoiseSpec, stream, time_seed
from .tree_classifier import DEFAULT_PATH_BUDGET, PAPER_BREADTHS, PAPER_DEPTHS, PAPER_EPS, sweep

DEFAULT_SEED = 20090501
OUT_ENV = "PROBCHAIN_OUT"
SUBCOMMANDS = ("errprop", "cpoiss", "treeclass", "lexnn", "hmmflat")

CHAIN_CSV_HEADER = ("family", "truncated", "e", "n", "mean_rel_error", "stderr")
CPOISS_CSV_HEADER = (
    "lambda", "p_min", "p_max", "samples", "mean", "variance", "skewness",
    "x_scale", "x_shift", "norm", "reduced_chi2", "bins_used",
)
HIST_CSV_HEADER = ("bin_center", "count", "model_density")
TREE_CSV_HEADER = ("d", "eps", "mean_F_percent", "sd_percent", "negative_fraction")
LEX_CSV_HEADER = (
    "lexicon_name", "lexicon_size", "sample_size",
    "mean_accuracy_percent", "sd_percent", "oracle_expectation_percent",
)
HMM_CSV_HEADER = ("model_set", "accuracy_true", "accuracy_flat", "drop")


class UsageError(Exception):
    pass


def int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def str_list(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def boolean(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**32:
        raise argparse.ArgumentTypeError("seed must be a 32-bit unsigned integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


@dataclass(frozen=True)
class Opt:
    dest: str
    type: Callable[[str], Any]
    help: str
    choices: tuple | None = None
    flag_only: bool = False  # store_true style


OPTIONS: dict[str, list[Opt]] = {
    "errprop": [
        Opt("noise", str, "noise family", choices=("uniform", "gaussian")),
        Opt("truncated", boolean, "clamp perturbed probabilities into [0, 1]", flag_only=True),
        Opt("n", int_list, "chain lengths for the error curves"),
        Opt("samples", _positive, "probability vectors per repetition"),
        Opt("repetitions", _positive, "repetitions averaged per curve point"),
        Opt("amp_step", float, "amplitude grid step"),
        Opt("amp_count", _positive, "number of amplitudes on the grid"),
        Opt("table", boolean, "emit the e x n appendix table instead of curves", flag_only=True),
    ],
    "cpoiss": [
        Opt("lambdas", int_list, "chain lengths (= Poisson lambda)"),
        Opt("pmin", float, "lower end of the probability interval"),
        Opt("pmax", float, "upper end of the probability interval"),
        Opt("samples", _positive, "sums per histogram"),
        Opt("bins", str, "numpy histogram binning rule or bin count"),
    ],
    "treeclass": [
        Opt("depths", int_list, "tree depths"),
        Opt("breadths", int_list, "tree fan-outs"),
        Opt("eps", float_list, "noise amplitudes"),
        Opt("models", _positive, "random models per (depth, breadth)"),
        Opt("trials", _positive, "noisy trials per model"),
        Opt("path_budget", _positive, "skip topologies with more paths than this"),
    ],
    "lexnn": [
        Opt("lexicon", str_list, "word list file(s), comma-separated"),
        Opt("sample", _positive, "words drawn per repeat"),
        Opt("repeats", _positive, "independent repeats"),
        Opt("noise", float, "bipolar noise amplitude on counts"),
    ],
    "hmmflat": [
        Opt("scenario", str_list, "built-in model sets: cycle, emission, mixed"),
        Opt("models", str_list, "model files forming one extra model set"),
        Opt("sequences", _positive, "test sequences per model set"),
        Opt("length", _positive, "symbols per sequence"),
    ],
}

PRESETS: dict[str, dict[str, dict[str, Any]]] = {
    "errprop": {
        "paper": dict(noise="uniform", truncated=False, n=[1, 2, 5, 10, 20, 30, 40], samples=100_000,
                      repetitions=20, amp_step=0.01, amp_count=100, table=False),
        "desk": dict(noise="uniform", truncated=False, n=[1, 5, 10, 20, 40], samples=10_000,
                     repetitions=5, amp_step=0.01, amp_count=100, table=False),
    },
    "cpoiss": {
        "paper": dict(lambdas=[11, 21, 31, 41], pmin=0.0, pmax=0.84, samples=1_000_000, bins="fd"),
        "desk": dict(lambdas=[11, 21, 31, 41], pmin=0.0, pmax=0.84, samples=62_500, bins="fd"),
    },
    "treeclass": {
        "paper": dict(depths=list(PAPER_DEPTHS), breadths=list(PAPER_BREADTHS), eps=list(PAPER_EPS),
                      models=100, trials=400, path_budget=DEFAULT_PATH_BUDGET),
        "desk": dict(depths=list(PAPER_DEPTHS), breadths=list(PAPER_BREADTHS), eps=list(PAPER_EPS),
                     models=25, trials=100, path_budget=DEFAULT_PATH_BUDGET),
    },
    "lexnn": {
        "paper": dict(lexicon=None, sample=20_000, repeats=6, noise=0.0001),
        "desk": dict(lexicon=None, sample=2_500, repeats=3, noise=0.0001),
    },
    "hmmflat": {
        "paper": dict(scenario=["cycle", "emission", "mixed"], models=None, sequences=10_000, length=12),
        "desk": dict(scenario=["cycle", "emission", "mixed"], models=None, sequences=625, length=12),
    },
}

REQUIRED = {"lexnn": ("lexicon",)}


@dataclass
class RunConfig:
    subcommand: str
    seed: int
    seed_source: str
    preset: str
    jobs: int
    out_dir: Path
    params: dict[str, Any] = field(default_factory=dict)

    def rerun_command(self) -> str:
        args = ["probchain", self.subcommand, "--preset", self.preset, "--seed", str(self.seed)]
        for opt in OPTIONS[self.subcommand]:
            v = self.params.get(opt.dest)
            if v is None:
                continue
            flag = "--" + opt.dest.replace("_", "-")
            if opt.flag_only:
                if v:
                    args.append(flag)
                continue
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            args += [flag, str(v)]
        return shlex.join(args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probchain",
        description="Error propagation in probability products: experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sp = subs.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--seed", type=_seed, default=None, help=f"32-bit seed (default {DEFAULT_SEED})")
        sp.add_argument("--time-seed", action="store_true",
                        help="seed from the microseconds field of the start time")
        sp.add_argument("--preset", choices=("paper", "desk"), default=None, help="scale preset (default desk)")
        sp.add_argument("--config", type=Path, default=None, help="flat key=value parameter file")
        sp.add_argument("--out", type=Path, default=None,
                        help=f"output directory (default ${OUT_ENV} or the current directory)")
        sp.add_argument("--jobs", type=_positive, default=None, help="worker processes (default 1)")
        for opt in OPTIONS[name]:
            flag = "--" + opt.dest.replace("_", "-")
            desk = PRESETS[name]["desk"].get(opt.dest)
            paper = PRESETS[name]["paper"].get(opt.dest)
            help_text = f"{opt.help} (desk: {desk}, paper: {paper})"
            if opt.flag_only:
                sp.add_argument(flag, dest=opt.dest, action="store_const", const=True, default=None,
                                help=help_text)
            else:
                sp.add_argument(flag, dest=opt.dest, type=opt.type, choices=opt.choices, default=None,
                                help=help_text)
    return parser


_COMMON_KEYS = {"seed": _seed, "preset": str, "jobs": _positive, "out": Path, "time_seed": boolean}


def read_config_file(path: Path, subcommand: str) -> dict[str, Any]:
    known = {o.dest: o for o in OPTIONS[subcommand]}
    values: dict[str, Any] = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            if key in _COMMON_KEYS:
                values[key] = _COMMON_KEYS[key](val)
            elif key in known:
                opt = known[key]
                v = opt.type(val)
                if opt.choices and v not in opt.choices:
                    raise argparse.ArgumentTypeError(f"must be one of {opt.choices}")
                values[key] = v
            else:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r} for {subcommand}")
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    if values.get("preset", "desk") not in ("paper", "desk"):
        raise UsageError(f"{path}: preset must be paper or desk")
    return values


def parse_args(argv: list[str] | None = None) -> RunConfig:
    """Resolve flags > config file > preset defaults into a :class:`RunConfig`.

    Raises ``SystemExit(2)`` on usage errors, like argparse itself.
    """
    parser = build_parser()
    ns = parser.parse_args(argv)
    sub = ns.subcommand
    try:
        file_values = read_config_file(ns.config, sub) if ns.config else {}
    except UsageError as exc:
        parser.error(str(exc))

    def pick(key: str, default: Any) -> Any:
        v = getattr(ns, key, None)
        if v is not None and v is not False:
            return v
        return file_values.get(key, default)

    preset = pick("preset", "desk")
    params = dict(PRESETS[sub][preset])
    for opt in OPTIONS[sub]:
        params[opt.dest] = pick(opt.dest, params.get(opt.dest))
    for key in REQUIRED.get(sub, ()):
        if not params.get(key):
            parser.error(f"{sub} requires --{key}")

    if ns.time_seed or file_values.get("time_seed"):
        if ns.seed is not None:
            parser.error("--seed and --time-seed are mutually exclusive")
        seed, source = time_seed(), "time-microseconds"
    else:
        seed, source = pick("seed", DEFAULT_SEED), "fixed"
    out = pick("out", None) or Path(os.environ.get(OUT_ENV, "."))
    return RunConfig(sub, seed, source, preset, pick("jobs", 1), Path(out), params)


# -- experiment runners --------------------------------------------------------------


def _run_errprop(cfg: RunConfig, stem: Path) -> list[Path]:
    p = cfg.params
    noise = NoiseSpec(p["noise"], bool(p["truncated"]))
    outputs = []
    if p["table"]:
        table = appendix_table(noise, p["samples"], p["repetitions"], cfg.seed, cfg.jobs)
        rows = [
            (noise.family.value, noise.truncated, e, n, float(table.raw[i, j]), float(table.stderr[i, j]))
            for i, e in enumerate(table.amplitudes)
            for j, n in enumerate(table.chain_lengths)
        ]
        outputs.append(write_csv(stem.with_suffix(".csv"), CHAIN_CSV_HEADER, rows))
        txt = stem.with_suffix(".txt")
        txt.write_text(table.format(), encoding="utf-8")
        outputs.append(txt)
        return outputs
    rows = []
    for n in p["n"]:
        spec = ChainSpec(n, noise, p["samples"], p["repetitions"], p["amp_step"], p["amp_count"])
        curve = relative_error_mc(spec, cfg.seed, cfg.jobs)
        rows += [
            (noise.family.value, noise.truncated, e, n, float(r), float(s))
            for e, r, s in zip(curve.amplitudes, curve.rel_errors, curve.stderrs)
        ]
        outputs.append(write_plot_data(stem.parent / f"{stem.name}-n{n}.dat", curve.points()))
    outputs.insert(0, write_csv(stem.with_suffix(".csv"), CHAIN_CSV_HEADER, rows))
    return outputs


def _sumlog_unit(args: tuple):
    n, p_min, p_max, count, seed, bins = args
    return sample_sumlog(n, p_min, p_max, count, stream(seed, "cpoiss", n), bins=bins)


def _bins(text: str):
    return int(text) if str(text).isdigit() else text


def _run_cpoiss(cfg: RunConfig, stem: Path) -> list[Path]:
    p = cfg.params
    units = [(lam, p["pmin"], p["pmax"], p["samples"], cfg.seed, _bins(p["bins"])) for lam in p["lambdas"]]
    samples = map_units(_sumlog_unit, units, cfg.jobs)
    fits = fit_cpoiss_shared(samples)
    rows, outputs = [], []
    for s, fit in zip(samples, fits):
        m = fit.model
        rows.append((
            s.n, s.p_min, s.p_max, len(s.values), float(s.values.mean()), float(s.values.var(ddof=1)),
            sample_skewness(s.values), m.x_scale, m.x_shift, m.norm, fit.reduced_chi2, fit.bins_used,
        ))
        hist = stem.parent / f"{stem.name}-lambda{s.n}.csv"
        outputs.append(write_csv(hist, HIST_CSV_HEADER, histogram_rows(s, fit)))
    outputs.insert(0, write_csv(stem.with_suffix(".csv"), CPOISS_CSV_HEADER, rows))
    return outputs


def _run_treeclass(cfg: RunConfig, stem: Path) -> list[Path]:
    p = cfg.params
    table = sweep(p["depths"], p["breadths"], p["eps"], p["models"], p["trials"], cfg.seed, cfg.jobs,
                  p["path_budget"])
    csv_path = write_csv(stem.with_suffix(".csv"), TREE_CSV_HEADER, table.rows())
    txt = stem.with_suffix(".txt")
    txt.write_text(table.format(), encoding="utf-8")
    return [csv_path, txt]


def _run_lexnn(cfg: RunConfig, stem: Path) -> list[Path]:
    p = cfg.params
    rows = []
    for path in p["lexicon"]:
        lex = load_lexicon(path)
        res = run_experiment(lex, p["repeats"], p["sample"], p["noise"], cfg.seed, cfg.jobs)
        rows.append((res.name, res.lexicon_size, res.sample_size, 100 * res.mean, 100 * res.sd,
                     100 * res.oracle_mean))
    return [write_csv(stem.with_suffix(".csv"), LEX_CSV_HEADER, rows)]


def _run_hmmflat(cfg: RunConfig, stem: Path) -> list[Path]:
    p = cfg.params
    sets = []
    for name in p["scenario"] or []:
        if name not in SCENARIOS:
            raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
        sets.append((name, SCENARIOS[name]()))
    if p["models"]:
        sets.append(("custom", [load_hmm(f) for f in p["models"]]))
    rows = []
    for name, models in sets:
        run = run_scenario(models, name, p["sequences"], p["length"], stream(cfg.seed, "hmmflat", name))
        r = run.report
        rows.append((name, r.accuracy_true, r.accuracy_flat, r.drop))
    return [write_csv(stem.with_suffix(".csv"), HMM_CSV_HEADER, rows)]


RUNNERS = {
    "errprop": _run_errprop,
    "cpoiss": _run_cpoiss,
    "treeclass": _run_treeclass,
    "lexnn": _run_lexnn,
    "hmmflat": _run_hmmflat,
}


def _jsonable(v: Any) -> Any:
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    return v


def run(cfg: RunConfig) -> int:
    started = dt.datetime.now(dt.timezone.utc)
    stamp = started.strftime("%Y%m%dT%H%M%S%fZ")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    stem = cfg.out_dir / f"{cfg.subcommand}-{cfg.seed}-{stamp}"
    t0 = time.perf_counter()
    try:
        outputs = RUNNERS[cfg.subcommand](cfg, stem)
    except (ValueError, FitError, OSError) as exc:
        print(f"probchain {cfg.subcommand}: {exc}", file=sys.stderr)
        return 1
    runtime = time.perf_counter() - t0
    manifest = {
        "subcommand": cfg.subcommand,
        "seed": cfg.seed,
        "seed_source": cfg.seed_source,
        "preset": cfg.preset,
        "jobs": cfg.jobs,
        "params": {k: _jsonable(v) for k, v in cfg.params.items()},
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
        "started_utc": started.isoformat(),
        "runtime_seconds": round(runtime, 3),
        "outputs": [p.name for p in outputs],
        "rerun": cfg.rerun_command(),
    }
    write_manifest(stem.parent / f"{stem.name}.manifest.json", manifest)
    print(f"wrote {len(outputs)} file(s) to {cfg.out_dir} ({runtime:.1f} s)")
    return 0


def main(argv: list[str] | None = None) -> int:
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
