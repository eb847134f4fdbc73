"""``sketch`` command-line front end.

Subcommands: ``synthetic``, ``ensemble``, ``elliptic``, ``bounds`` and
``moments``.  Parameters come from built-in defaults, then an optional
``--config`` file (JSON or YAML), then flags; later sources win.  Every
report embeds the resolved experiment config, minus the output directory,
so reruns with the same parameters produce byte-identical files.

Exit codes: 0 success, 2 config error, 3 numerical degeneracy, 4 I/O error.
Failures print one JSON error record to stderr.
"""
import argparse
from dataclasses import asdict, dataclass, fields
import json
import math
import os
import sys

import yaml

from hesssketch import bounds, elliptic, ensemble, io, spectral
from hesssketch.datagen import DISTRIBUTIONS, SyntheticSpec, gen_factor
from hesssketch.errors import ConfigError, ContractError, DegenerateError, SolverError

KINDS = ("synthetic", "ensemble", "elliptic", "bounds", "moments")
EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_IO = 0, 2, 3, 4


@dataclass
class ExperimentConfig:
    kind: str
    n: int = 5000
    r: int = 50
    m: tuple = ()
    dist: str = "gaussian"
    bernoulli_p: float = 0.5
    data_seed: int = None
    seed: int = 0
    trials: int = 10_000
    mode: str = None
    rank_thresholds: tuple = ensemble.RANK_THRESHOLDS
    rank_tol: float = 1e-12
    eta: float = 0.2
    p: tuple = (2, 4, 8)
    preset: str = None
    from_factor: str = None
    out: str = None

    def to_dict(self):
        """Provenance record: every parameter except the output location."""
        d = asdict(self)
        d.pop("out")
        for k in ("m", "rank_thresholds", "p"):
            d[k] = list(d[k])
        return d

    def factor_source(self):
        if self.from_factor:
            return "file"
        if self.preset:
            return "elliptic"
        return "synthetic"


def _int_list(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _float_list(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _as_tuple(value, conv):
    if isinstance(value, (list, tuple)):
        return tuple(conv(v) for v in value)
    if isinstance(value, str):
        return tuple(conv(v) for v in value.split(",") if v.strip())
    return (conv(value),)


def _check(cond, message):
    if not cond:
        raise ConfigError(message)


def validate(cfg):
    """Check every module precondition before any computation."""
    _check(cfg.kind in KINDS, f"kind must be one of {KINDS}")
    try:
        cfg.m = _as_tuple(cfg.m, int)
        cfg.p = _as_tuple(cfg.p, float)
        cfg.rank_thresholds = _as_tuple(cfg.rank_thresholds, float)
        for name in ("n", "r", "seed", "trials"):
            setattr(cfg, name, int(getattr(cfg, name)))
        for name in ("bernoulli_p", "rank_tol", "eta"):
            setattr(cfg, name, float(getattr(cfg, name)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed parameter: {exc}") from None
    _check(cfg.seed >= 0 and cfg.seed < 2**64, "seed must lie in [0, 2**64)")
    if cfg.data_seed is None:
        cfg.data_seed = cfg.seed
    _check(0 <= int(cfg.data_seed) < 2**64, "data_seed must lie in [0, 2**64)")
    cfg.data_seed = int(cfg.data_seed)
    if cfg.mode is None:
        cfg.mode = "noreplace" if cfg.factor_source() == "elliptic" else "replace"
    _check(cfg.mode in ensemble.MODES, f"mode must be one of {ensemble.MODES}")
    _check(cfg.trials >= 1, "trials must be >= 1")
    _check(all(0.0 < t < 1.0 for t in cfg.rank_thresholds), "rank thresholds must lie in (0, 1)")
    _check(0.0 < cfg.rank_tol < 1.0, "rank_tol must lie in (0, 1)")
    _check(0.0 < cfg.eta < 0.5, "eta must lie in (0, 1/2)")
    _check(all(p >= 2 for p in cfg.p), "moment orders must be >= 2")
    _check(all(m >= 1 for m in cfg.m), "sample sizes must be >= 1")
    _check(not (cfg.preset and cfg.from_factor), "give at most one of --preset and --from-factor")
    if cfg.kind == "elliptic":
        cfg.preset = cfg.preset or "paper-D1"
    if cfg.preset is not None:
        _check(cfg.preset in elliptic.PRESETS, f"unknown preset {cfg.preset!r}; choose from {sorted(elliptic.PRESETS)}")
    if cfg.factor_source() == "synthetic":
        _check(cfg.dist in DISTRIBUTIONS, f"dist must be one of {DISTRIBUTIONS}")
        _check(cfg.n >= cfg.r >= 1, f"need n >= r >= 1, got n={cfg.n}, r={cfg.r}")
        _check(0.0 < cfg.bernoulli_p <= 1.0, "bernoulli_p must lie in (0, 1]")
        if cfg.mode == "noreplace":
            _check(all(m <= cfg.n for m in cfg.m), "m exceeds n for sampling without replacement")
    if cfg.kind in ("ensemble", "bounds", "moments"):
        _check(len(cfg.m) > 0, f"{cfg.kind} needs at least one sample size (--m)")
    if cfg.kind == "moments":
        _check(all(m >= 2 for m in cfg.m), "moments need m >= 2 (a 1x1 sketch has no off-diagonal)")
    if cfg.out is None and cfg.kind != "bounds":
        cfg.out = "sketch-out"
    return cfg


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError:
        raise
    try:
        data = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    return data


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="sketch", description="Uniform row-subsampling experiments for Gram-factor Hessians.")
    sub = parser.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    def common(p):
        p.add_argument("--config", default=S, help="JSON or YAML parameter file; flags win on conflict")
        p.add_argument("--out", default=S, help="output directory")
        p.add_argument("--seed", type=int, default=S, help="trial-stream seed (also the data seed unless --data-seed)")
        p.add_argument("--data-seed", dest="data_seed", type=int, default=S)

    def factor(p):
        p.add_argument("--dist", choices=DISTRIBUTIONS, default=S)
        p.add_argument("--n", type=int, default=S)
        p.add_argument("--r", type=int, default=S)
        p.add_argument("--bernoulli-p", dest="bernoulli_p", type=float, default=S)
        p.add_argument("--preset", default=S, help=f"elliptic preset: {', '.join(sorted(elliptic.PRESETS))}")
        p.add_argument("--from-factor", dest="from_factor", default=S, help="HSK1 factor file")

    def trials(p):
        p.add_argument("--m", type=_int_list, default=S, help="comma-separated sample sizes")
        p.add_argument("--trials", type=int, default=S)
        p.add_argument("--mode", choices=ensemble.MODES, default=S)
        p.add_argument("--rank-tol", dest="rank_tol", type=float, default=S)

    p = sub.add_parser("synthetic", help="generate a synthetic factor and its spectral summary")
    common(p)
    factor(p)

    p = sub.add_parser("ensemble", help="condition-number ensembles, one report per m")
    common(p)
    factor(p)
    trials(p)
    p.add_argument("--rank-thresholds", dest="rank_thresholds", type=_float_list, default=S)
    p.add_argument("--eta", type=float, default=S)
    p.add_argument("--p", type=_float_list, default=S, help="moment orders")

    p = sub.add_parser("elliptic", help="sensitivity factor of an elliptic layout, optional failure table")
    common(p)
    p.add_argument("--preset", default=S, help=f"one of {', '.join(sorted(elliptic.PRESETS))}")
    trials(p)

    p = sub.add_parser("bounds", help="theorem quantities for a factor")
    common(p)
    factor(p)
    p.add_argument("--m", type=_int_list, default=S)

    p = sub.add_parser("moments", help="empirical hollow-norm moments against their bound")
    common(p)
    factor(p)
    trials(p)
    p.add_argument("--p", type=_float_list, default=S, help="moment orders")
    return parser


def resolve_config(argv):
    args = vars(build_parser().parse_args(argv))
    kind = args.pop("kind")
    merged = {}
    path = args.pop("config", None)
    if path is not None:
        merged.update(load_config_file(path))
        if merged.get("kind", kind) != kind:
            raise ConfigError(f"config file is for {merged['kind']!r}, command is {kind!r}")
    merged.update(args)
    merged["kind"] = kind
    return validate(ExperimentConfig(**merged))


def _factor(cfg):
    if cfg.from_factor:
        return io.load_factor(cfg.from_factor), None
    if cfg.preset:
        system, layout, f = elliptic.build_preset(cfg.preset, seed=cfg.data_seed)
        return f, (system, layout)
    return gen_factor(SyntheticSpec(cfg.n, cfg.r, cfg.dist, cfg.data_seed, cfg.bernoulli_p)), None


def _outdir(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def _path(cfg, name):
    return os.path.join(cfg.out, name)


def _write_summary(cfg, f, summary):
    io.write_json(
        _path(cfg, "summary.json"),
        {"kind": "summary", "config": cfg.to_dict(), "summary": summary.to_dict(), "meta": f.meta},
    )
    io.write_csv(_path(cfg, "summary.csv"), io.SUMMARY_COLUMNS, [io.summary_row(summary)])


def _check_m(cfg, f):
    if cfg.mode == "noreplace":
        for m in cfg.m:
            if m > f.n:
                raise ConfigError(f"m={m} exceeds N={f.n} for sampling without replacement")


def _run_ensembles(cfg, f, summary):
    _check_m(cfg, f)
    table = []
    for m in cfg.m:
        rep = ensemble.run_condition_ensemble(
            f,
            m,
            cfg.trials,
            cfg.seed,
            cfg.mode,
            summary=summary,
            rank_thresholds=cfg.rank_thresholds,
            rank_tol=cfg.rank_tol,
            eta=cfg.eta,
            moment_orders=cfg.p,
        )
        doc = {"kind": "ensemble", "experiment": cfg.to_dict(), **rep.to_dict()}
        io.write_json(_path(cfg, f"ensemble_m{m}.json"), doc)
        io.write_csv(_path(cfg, f"ensemble_m{m}.csv"), io.ENSEMBLE_COLUMNS, io.ensemble_rows(rep.records))
        table.append((m, rep.failure_threshold, rep.failure_prob))
    io.write_csv(_path(cfg, "failure_table.csv"), ("m", "threshold", "failure_prob"), table)
    return table


def cmd_synthetic(cfg):
    _outdir(cfg)
    f, _ = _factor(cfg)
    io.save_factor(_path(cfg, "factor.hsk"), f)
    _write_summary(cfg, f, spectral.summarize(f))


def cmd_ensemble(cfg):
    _outdir(cfg)
    f, _ = _factor(cfg)
    summary = spectral.summarize(f)
    _write_summary(cfg, f, summary)
    _run_ensembles(cfg, f, summary)


def cmd_elliptic(cfg):
    _outdir(cfg)
    f, (system, layout) = _factor(cfg)
    io.save_factor(_path(cfg, "factor.hsk"), f)
    summary = spectral.summarize(f)
    _write_summary(cfg, f, summary)
    grid = system.grid
    h = grid.h
    rows = []
    for k, (a, b) in enumerate(layout.pairs):
        (ay, ax), (by, bx) = grid.unravel(a), grid.unravel(b)
        rows.append((k, a, b, ax * h, ay * h, bx * h, by * h))
    io.write_csv(_path(cfg, "layout.csv"), ("pair", "source", "detector", "source_x", "source_y", "detector_x", "detector_y"), rows)
    sigma = system.media.sigma
    n = grid.nodes_per_side
    io.write_csv(
        _path(cfg, "media.csv"),
        ("ix", "iy", "x", "y", "sigma"),
        ((ix, iy, ix * h, iy * h, float(sigma[iy, ix])) for iy in range(n) for ix in range(n)),
    )
    if cfg.m:
        _run_ensembles(cfg, f, summary)


def cmd_bounds(cfg):
    f, _ = _factor(cfg)
    summary = spectral.summarize(f)
    reports = [bounds.condition_threshold(summary, m) for m in cfg.m]
    doc = {
        "kind": "bounds",
        "config": cfg.to_dict(),
        "summary": summary.to_dict(),
        "admissible_m_max": bounds.max_sample_size(summary),
        "theorem": [t.to_dict() for t in reports],
    }
    sys.stdout.write(io.dumps(doc))
    if cfg.out is not None:
        _outdir(cfg)
        io.write_json(_path(cfg, "bounds.json"), doc)
        io.write_csv(_path(cfg, "bounds.csv"), io.BOUNDS_COLUMNS, [io.bounds_row(t) for t in reports])


def cmd_moments(cfg):
    _outdir(cfg)
    f, _ = _factor(cfg)
    _check_m(cfg, f)
    summary = spectral.summarize(f)
    rows = []
    for m in cfg.m:
        records = ensemble.run_trials(f, m, cfg.trials, cfg.seed, cfg.mode, rank_tol=cfg.rank_tol)
        for p in cfg.p:
            est = ensemble.moment_estimate(f, m, p, cfg.trials, cfg.seed, cfg.mode, summary=summary, records=records)
            rows.append({"m": m, "p": p, "estimate": est.estimate, "bound": est.bound})
    io.write_json(
        _path(cfg, "moments.json"),
        {"kind": "moments", "config": cfg.to_dict(), "summary": summary.to_dict(), "moments": rows},
    )
    io.write_csv(_path(cfg, "moments.csv"), ("m", "p", "estimate", "bound"), [tuple(r.values()) for r in rows])


COMMANDS = {
    "synthetic": cmd_synthetic,
    "ensemble": cmd_ensemble,
    "elliptic": cmd_elliptic,
    "bounds": cmd_bounds,
    "moments": cmd_moments,
}


def _fail(code, exc):
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    residual = getattr(exc, "residual", None)
    if residual is not None and math.isfinite(residual):
        record["residual"] = residual
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
    return code


def main(argv=None):
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
        COMMANDS[cfg.kind](cfg)
    except (ConfigError, ContractError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (DegenerateError, SolverError, ArithmeticError) as exc:
        return _fail(EXIT_DEGENERATE, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
