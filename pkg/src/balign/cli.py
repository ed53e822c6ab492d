"""Command-line front end: ``balign run | crlb | codebook``.

Configuration is a JSON document::

    {
      "seed": 0, "out": "results", "trials": 200,
      "system":   {SystemConfig field: value, ...},
      "run":      {"rmse_vs_snr": {...}, "se_vs_slots": {...}, "se_vs_snr": {...}, "traces": 2},
      "crlb":     {"snr_db": [...], "slots": [...]},
      "codebook": {"n_angles": 181}
    }

Sections omitted from the file take the bundled defaults; a sweep set to
``null`` is skipped. ``--set a.b=value`` overrides one key (value parsed as
JSON, falling back to a plain string); bare SystemConfig field names are
accepted as shorthand for ``system.<name>``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import hashlib
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .codebook import Codebook, pattern_metrics
from .config import ConfigError, ParamGrid, SystemConfig
from .simulator import (Setup, SweepResult, run_trial, sweep_crlb, sweep_rmse_vs_snr,
                        sweep_se_vs_slots, sweep_se_vs_snr)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
FULL_SCALE_KEYS = ("n_subcarriers", "n_grid_angle", "n_grid_delay", "n_grid_doppler")
RCS_MODELS = ("analytic", "hypothetical", "metallic")
SYSTEM_FIELDS = {f.name for f in dataclasses.fields(SystemConfig)}

_SWEEP_KEYS = {
    "rmse_vs_snr": {"snr_db", "slots", "trials", "sensing_only"},
    "se_vs_slots": {"slots", "snr_db", "trials"},
    "se_vs_snr": {"snr_db", "rcs_models", "trials"},
}
_REQUIRED = {"rmse_vs_snr": ("snr_db", "slots"), "se_vs_slots": (), "se_vs_snr": ("snr_db",)}


class ConfigInvalid(Exception):
    """Invalid configuration; ``path`` locates the offending key."""

    def __init__(self, message: str, path: tuple[str, ...] = ()):
        super().__init__(message)
        self.path = path


class NumericalFailure(Exception):
    pass


def default_config() -> dict:
    text = resources.files("balign").joinpath("data/default.json").read_text()
    return json.loads(text)


# ------------------------------------------------------------- loading


def _line_of(text: str, path: tuple[str, ...]) -> int | None:
    """1-based line where the (nested) key ``path`` appears, searched in order."""
    lines = text.splitlines()
    start = 0
    found = None
    for key in path:
        needle = f'"{key}"'
        for i in range(start, len(lines)):
            if needle in lines[i]:
                found = start = i
                break
        else:
            return found + 1 if found is not None else None
    return found + 1 if found is not None else None


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_override(doc: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigInvalid(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigInvalid(f"--set has an empty key: {assignment!r}")
    if len(parts) == 1 and parts[0] in SYSTEM_FIELDS:
        parts = ["system", parts[0]]
    node = doc
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = _parse_value(raw)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)
            and math.isfinite(float(v)))


def _num_list(v, path, *, integer=False, minimum=None):
    ok = _is_int if integer else _is_num
    if not isinstance(v, list) or not v or not all(ok(x) for x in v):
        kind = "integers" if integer else "numbers"
        raise ConfigInvalid(f"expected a non-empty list of {kind}, got {v!r}", path)
    if minimum is not None and min(v) < minimum:
        raise ConfigInvalid(f"values must be >= {minimum}, got {v!r}", path)
    return v


def _trials(v, path):
    if not _is_int(v) or v < 1:
        raise ConfigInvalid(f"trials must be a positive integer, got {v!r}", path)
    return v


def validate(doc: dict) -> SystemConfig:
    """Check the merged document; returns the SystemConfig it describes."""
    allowed = {"seed", "out", "trials", "system", "run", "crlb", "codebook"}
    for key in doc:
        if key not in allowed:
            raise ConfigInvalid(f"unknown top-level key {key!r}", (key,))
    seed = doc.get("seed")
    if not _is_int(seed) or not 0 <= seed < 2**64:
        raise ConfigInvalid(f"seed must be an unsigned 64-bit integer, got {seed!r}", ("seed",))
    if not isinstance(doc.get("out"), str) or not doc["out"]:
        raise ConfigInvalid("out must be a non-empty path string", ("out",))
    _trials(doc.get("trials"), ("trials",))

    system = doc.get("system")
    if not isinstance(system, dict):
        raise ConfigInvalid("system must be an object", ("system",))
    for key in system:
        if key not in SYSTEM_FIELDS:
            raise ConfigInvalid(f"unknown system parameter {key!r}", ("system", key))
    try:
        cfg = SystemConfig(**system)
    except ConfigError as exc:
        raise ConfigInvalid(str(exc), ("system", exc.key) if exc.key else ("system",)) from None
    except TypeError as exc:
        raise ConfigInvalid(str(exc), ("system",)) from None

    run = doc.get("run")
    if not isinstance(run, dict):
        raise ConfigInvalid("run must be an object", ("run",))
    for key, value in run.items():
        path = ("run", key)
        if key == "traces":
            if not _is_int(value) or value < 0:
                raise ConfigInvalid(f"traces must be a nonnegative integer, got {value!r}", path)
            continue
        if key not in _SWEEP_KEYS:
            raise ConfigInvalid(f"unknown sweep {key!r}", path)
        if value is None:
            continue
        if not isinstance(value, dict):
            raise ConfigInvalid(f"sweep {key!r} must be an object or null", path)
        for sub in value:
            if sub not in _SWEEP_KEYS[key]:
                raise ConfigInvalid(f"unknown key {sub!r} in sweep {key!r}", path + (sub,))
        if "trials" in value:
            _trials(value["trials"], path + ("trials",))
        if "slots" in value:
            _num_list(value["slots"], path + ("slots",), integer=True, minimum=1)
        snr = value.get("snr_db")
        if key == "se_vs_slots":
            if snr is not None and not _is_num(snr):
                raise ConfigInvalid(f"snr_db must be a number, got {snr!r}", path + ("snr_db",))
        elif snr is not None:
            _num_list(snr, path + ("snr_db",))
        if "sensing_only" in value and not isinstance(value["sensing_only"], bool):
            raise ConfigInvalid("sensing_only must be true or false", path + ("sensing_only",))
        models = value.get("rcs_models")
        if models is not None and (not isinstance(models, list) or not models
                                   or any(m not in RCS_MODELS for m in models)):
            raise ConfigInvalid(f"rcs_models must be a non-empty subset of {RCS_MODELS}",
                                path + ("rcs_models",))
        for need in _REQUIRED[key]:
            if need not in value:
                raise ConfigInvalid(f"sweep {key!r} needs {need!r}", path)

    crlb = doc.get("crlb")
    if not isinstance(crlb, dict):
        raise ConfigInvalid("crlb must be an object", ("crlb",))
    for key in crlb:
        if key not in ("snr_db", "slots", "trials"):
            raise ConfigInvalid(f"unknown key {key!r} in crlb", ("crlb", key))
    _num_list(crlb.get("snr_db"), ("crlb", "snr_db"))
    _num_list(crlb.get("slots"), ("crlb", "slots"), integer=True, minimum=1)
    if "trials" in crlb:
        _trials(crlb["trials"], ("crlb", "trials"))

    cb = doc.get("codebook")
    if not isinstance(cb, dict):
        raise ConfigInvalid("codebook must be an object", ("codebook",))
    for key, value in cb.items():
        if key != "n_angles":
            raise ConfigInvalid(f"unknown key {key!r} in codebook", ("codebook", key))
        if not _is_int(value) or value < 2:
            raise ConfigInvalid("n_angles must be an integer >= 2", ("codebook", key))
    return cfg


def load_config(path: str | None, seed: int | None = None, full_scale: bool = False,
                overrides=()) -> tuple[dict, SystemConfig]:
    """Merge bundled defaults, the file, ``--full-scale`` and overrides; then validate.

    Raises :class:`ConfigInvalid` with a message already carrying the file
    location when one is known.
    """
    doc = default_config()
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigInvalid(f"{path}: cannot read config: {exc.strerror or exc}") from None
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") \
                from None
        if not isinstance(user, dict):
            raise ConfigInvalid(f"{path}:1: top level must be a JSON object")
        doc = _merge(doc, user)
    if full_scale:
        big = SystemConfig.full_scale()
        for key in FULL_SCALE_KEYS:
            doc["system"][key] = getattr(big, key)
    for item in overrides:
        apply_override(doc, item)
    if seed is not None:
        doc["seed"] = seed
    try:
        cfg = validate(doc)
    except ConfigInvalid as exc:
        where = "config"
        if path is not None and exc.path:
            line = _line_of(text, exc.path)
            where = f"{path}:{line}" if line else f"{path} (key {'.'.join(exc.path)})"
        elif exc.path:
            where = f"config key {'.'.join(exc.path)}"
        raise ConfigInvalid(f"{where}: {exc}", exc.path) from None
    return doc, cfg


def config_hash(doc: dict) -> str:
    """SHA-256 of the canonical resolved config, excluding the output directory."""
    body = {k: v for k, v in doc.items() if k != "out"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":"))
                          .encode()).hexdigest()


# ------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_csv(path: Path, columns, rows, header: dict) -> None:
    """CSV with a ``#`` header block, comma separated, LF line endings."""
    with open(path, "w", newline="") as fh:
        for key, value in header.items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def write_sweep(path: Path, sweep: SweepResult, header: dict) -> None:
    write_csv(path, sweep.columns, sweep.rows, {**header, "table": sweep.name})


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o).__name__)


def write_json(path: Path, payload) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_json_default, allow_nan=True)
        fh.write("\n")


def print_table(sweep: SweepResult, out=None) -> None:
    out = out or sys.stdout
    cols = sweep.columns
    cells = [[_fmt(r[c]) for c in cols] for r in sweep.rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    print(f"[{sweep.name}]", file=out)
    print("  ".join(c.rjust(w) for c, w in zip(cols, widths)), file=out)
    for row in cells:
        print("  ".join(v.rjust(w) for v, w in zip(row, widths)), file=out)


def _header(command: str, doc: dict) -> dict:
    return {"balign": f"{command} {__version__}", "config_sha256": config_hash(doc),
            "seed": doc["seed"]}


def _check_finite(sweep: SweepResult, columns) -> None:
    for row in sweep.rows:
        for c in columns:
            if not math.isfinite(float(row[c])):
                raise NumericalFailure(f"{sweep.name}: non-finite {c} in row {row}")


# ------------------------------------------------------------- commands


def cmd_run(doc: dict, cfg: SystemConfig, out: Path, stream=None) -> int:
    stream = stream or sys.stdout
    seed, run = doc["seed"], doc["run"]
    header = _header("run", doc)
    summary = {"config_sha256": header["config_sha256"], "seed": seed, "sweeps": {}}
    sweeps = []
    spec = run.get("rmse_vs_snr")
    if spec is not None:
        res = sweep_rmse_vs_snr(cfg, spec["snr_db"], spec.get("trials", doc["trials"]),
                                spec["slots"], seed, spec.get("sensing_only", True))
        _check_finite(res, ["rmse_deg"])
        sweeps.append(res)
    spec = run.get("se_vs_slots")
    if spec is not None:
        res = sweep_se_vs_slots(cfg, spec.get("slots", [cfg.n_slots]),
                                spec.get("trials", doc["trials"]), spec.get("snr_db", -4.0), seed)
        _check_finite(res, ["se_aligned", "se_baseline"])
        sweeps.append(res)
    spec = run.get("se_vs_snr")
    if spec is not None:
        res = sweep_se_vs_snr(cfg, spec["snr_db"], spec.get("trials", doc["trials"]),
                              spec.get("rcs_models", RCS_MODELS), seed)
        _check_finite(res, ["se"])
        sweeps.append(res)
    for res in sweeps:
        write_sweep(out / f"{res.name}.csv", res, header)
        summary["sweeps"][res.name] = [{c: r[c] for c in res.columns} for r in res.rows]
        print_table(res, stream)
    write_json(out / "summary.json", summary)

    n_traces = run.get("traces", 0)
    if n_traces:
        se_spec = run.get("se_vs_slots") or {}
        snr = se_spec.get("snr_db", -4.0)
        tcfg = cfg.replace(n_slots=max(se_spec.get("slots", [cfg.n_slots])))
        setup = Setup.from_config(tcfg)
        traces = [run_trial(tcfg, snr, seed, t, setup).to_dict() for t in range(n_traces)]
        write_json(out / "traces.json", {"config_sha256": header["config_sha256"],
                                         "seed": seed, "snr_db": snr, "episodes": traces})
    print(f"wrote {len(sweeps)} table(s) to {out}", file=stream)
    return EXIT_OK


def cmd_crlb(doc: dict, cfg: SystemConfig, out: Path, stream=None) -> int:
    stream = stream or sys.stdout
    spec = doc["crlb"]
    res = sweep_crlb(cfg, spec["snr_db"], spec["slots"], spec.get("trials", doc["trials"]),
                     doc["seed"])
    if any(not float(r["crlb_exact_rad2"]) > 0 for r in res.rows):
        raise NumericalFailure("exact bound is not positive")
    header = _header("crlb", doc)
    by_snr = SweepResult("crlb_vs_snr", res.columns,
                         sorted(res.rows, key=lambda r: (r["slots"], r["snr_db"])), res.trials)
    by_slots = SweepResult("crlb_vs_slots", res.columns,
                           sorted(res.rows, key=lambda r: (r["snr_db"], r["slots"])), res.trials)
    write_sweep(out / "crlb_vs_snr.csv", by_snr, header)
    write_sweep(out / "crlb_vs_slots.csv", by_slots, header)
    print_table(by_snr, stream)
    return EXIT_OK


def cmd_codebook(doc: dict, cfg: SystemConfig, out: Path, stream=None) -> int:
    stream = stream or sys.stdout
    setup = Setup.from_config(cfg)
    n_angles = doc["codebook"].get("n_angles", cfg.n_grid_angle)
    grid = ParamGrid.from_config(cfg.replace(n_grid_angle=n_angles))
    header = _header("codebook", doc)
    books = {"ue": setup.ue_codebook, "bs": setup.bs_codebook}
    metric_rows = []
    for name, book in books.items():
        norms = np.linalg.norm(book.codewords, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-12):
            raise NumericalFailure(f"{name} codebook has non-unit codewords")
        book.save(out / f"codebook_{name}.json")
        back = Codebook.load(out / f"codebook_{name}.json")
        if not np.array_equal(back.codewords, book.codewords):
            raise NumericalFailure(f"{name} codebook export is not lossless")
        gains = 10 * np.log10(np.maximum(book.pattern(grid.angles), 1e-300))
        cols = ["angle_deg"] + [f"gain_db_{k}" for k in range(gains.shape[1])]
        rows = [dict(zip(cols, [float(np.rad2deg(a)), *g])) for a, g in zip(grid.angles, gains)]
        write_csv(out / f"pattern_{name}.csv", cols, rows,
                  {**header, "table": f"pattern_{name}", "unit": "|u_k^H a(angle)|^2 in dB"})
        ripple, leakage = pattern_metrics(book)
        for k in range(book.codewords.shape[1]):
            lo, hi = np.rad2deg(book.sectors[k])
            metric_rows.append({"codebook": name, "codeword": k, "sector_lo_deg": lo,
                                "sector_hi_deg": hi, "ripple_db": ripple[k],
                                "leakage_db": leakage[k], "converged": bool(book.converged[k])})
    mcols = ["codebook", "codeword", "sector_lo_deg", "sector_hi_deg", "ripple_db",
             "leakage_db", "converged"]
    write_csv(out / "codebook_metrics.csv", mcols, metric_rows,
              {**header, "table": "codebook_metrics"})
    print_table(SweepResult("codebook_metrics", mcols, metric_rows, 1), stream)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "crlb": cmd_crlb, "codebook": cmd_codebook}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="balign", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run the configured Monte Carlo sweeps"),
                            ("crlb", "tabulate angle bounds vs SNR and slots"),
                            ("codebook", "design codebooks and export beam patterns")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="JSON config (default: bundled)")
        p.add_argument("--seed", type=int, metavar="U64", help="override the master seed")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides config 'out')")
        p.add_argument("--full-scale", action="store_true",
                       help="full-size link: 2048 subcarriers, 400x20x20 grid")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key (dotted path)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc, cfg = load_config(args.config, args.seed, args.full_scale, args.overrides)
    except ConfigInvalid as exc:
        print(f"balign: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or doc["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"balign: error: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with np.errstate(over="raise", invalid="ignore", divide="ignore"):
            return COMMANDS[args.command](doc, cfg, out)
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError, OverflowError,
            ZeroDivisionError) as exc:
        print(f"balign: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
