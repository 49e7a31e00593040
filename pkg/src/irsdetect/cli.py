"""Command-line front end.

Subcommands ``roc``, ``localize``, ``stale-mmse`` and ``selftest``. Exit
codes: 0 success, 2 configuration error, 3 I/O error, 4 selftest failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import json
import logging
import math
import os
import sys
import tempfile
import typing

import numpy as np

from . import __version__, _backend
from .evaluation import (
    ConfigError,
    ExperimentConfig,
    TrialLog,
    build_setup,
    localization_errors,
    roc_sweep,
    run_trials,
    stale_mmse_diagnostic,
)

log = logging.getLogger("irsdetect")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SELFTEST = 0, 2, 3, 4
OUT_DIR_ENV = "IRSDETECT_OUT_DIR"
MANIFEST_FORMAT = "irsdetect-manifest/1"
ROC_COLUMNS = ("detector", "threshold", "p_fa", "p_md", "n_h0", "n_h1", "n_h2", "misclass", "n_fa", "n_md")

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_HINTS = typing.get_type_hints(ExperimentConfig)


def parse_grid(text: str) -> tuple:
    """``min:max:steps`` (inclusive, evenly spaced) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("expected min:max:steps")
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
        if steps < 1:
            raise ValueError("steps must be >= 1")
        return tuple(np.linspace(lo, hi, steps).tolist())
    return tuple(float(x) for x in text.split(",") if x.strip())


def _convert(key: str, raw):
    if key not in _FIELDS:
        raise ConfigError(key, "unknown key")
    hint = _HINTS[key]
    if raw is None or not isinstance(raw, str):
        return raw
    text = raw.strip()
    optional = type(None) in typing.get_args(hint)
    if optional and text.lower() in ("", "none", "auto"):
        return None
    base = next((t for t in typing.get_args(hint) if t is not type(None)), hint) if optional else hint
    try:
        if key == "threshold_grid":
            return parse_grid(text)
        if base is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError("expected a boolean")
        if base is int:
            return int(text, 0)
        if base is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {text!r}: {exc}") from None


def read_config_file(path: str) -> dict:
    """Parse a plain ``key = value`` file; ``#`` starts a comment, blank lines are ignored."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", "expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            values[key] = _convert(key, val)
    return values


def parse_config(path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """File values, then ``overrides`` (flags), then defaults; validated."""
    values = read_config_file(path) if path else {}
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = _convert(key, val)
    return ExperimentConfig(**values)


def atomic_write(path: str, text: str):
    """Write ``text`` to ``path`` via a temporary sibling and rename; no partial file on failure."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def roc_csv(points) -> str:
    lines = [",".join(ROC_COLUMNS)]
    for p in points:
        lines.append(
            f"{p.detector},{_fmt(p.threshold)},{p.p_fa:.6f},{p.p_md:.6f},{p.n_h0},{p.n_h1},{p.n_h2},"
            f"{p.n_misclass},{p.n_fa},{p.n_md}"
        )
    return "\n".join(lines) + "\n"


def roc_svg(curves: dict, floor: float = 1e-4, width: int = 480, height: int = 360) -> str:
    """Log-log P_MD versus P_FA plot as a self-contained SVG string.

    Probabilities below ``floor`` are drawn at the floor.
    """
    left, right, top, bottom = 60, 20, 20, 50
    pw, ph = width - left - right, height - top - bottom
    lo = math.log10(floor)

    def xy(pfa, pmd):
        u = (math.log10(max(pfa, floor)) - lo) / -lo
        v = (math.log10(max(pmd, floor)) - lo) / -lo
        return left + u * pw, top + (1 - v) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for e in range(int(lo), 1):
        x, _ = xy(10.0**e, floor)
        _, y = xy(floor, 10.0**e)
        out.append(f'<line x1="{x:.1f}" y1="{top}" x2="{x:.1f}" y2="{top + ph}" stroke="#ddd"/>')
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + pw}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{x:.1f}" y="{top + ph + 15}" text-anchor="middle">1e{e}</text>')
        out.append(f'<text x="{left - 5}" y="{y + 4:.1f}" text-anchor="end">1e{e}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">P_FA</text>')
    out.append(f'<text x="15" y="{top + ph / 2}" text-anchor="middle" transform="rotate(-90 15 {top + ph / 2})">P_MD</text>')
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    for j, (name, pts) in enumerate(curves.items()):
        col = colors[j % len(colors)]
        path = " ".join("%.1f,%.1f" % xy(p.p_fa, p.p_md) for p in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        out.append(f'<text x="{left + pw - 5}" y="{top + 15 + 14 * j}" text-anchor="end" fill="{col}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir: str, command: str, config: ExperimentConfig, outputs: list) -> str:
    manifest = {
        "format": MANIFEST_FORMAT,
        "command": command,
        "version": __version__,
        "backend": _backend.NAME,
        "seed": config.seed,
        "config": config.to_dict(),
        "created_utc": _now(),
        "outputs": {name: os.path.join(out_dir, name) for name in outputs},
    }
    if command != "selftest":
        manifest["geometry"] = build_setup(config).describe()
    path = os.path.join(out_dir, "manifest.json")
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path: str):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("format") != MANIFEST_FORMAT:
        raise ConfigError("manifest", f"unsupported format {data.get('format')!r}")
    return data["command"], ExperimentConfig.from_dict(data["config"])


def _progress(done, total):
    log.info("chunk %d/%d", done, total)


def cmd_roc(config, out_dir, args):
    outputs = ["trials.log", "roc.csv"] + ([] if args.no_plot else ["roc.svg"])
    write_manifest(out_dir, "roc", config, outputs)
    tl = run_trials(config, progress=_progress)
    atomic_write(os.path.join(out_dir, "trials.log"), tl.dumps())
    curves = {d: roc_sweep(tl, d) for d in ("TypeI", "TypeII")}
    atomic_write(os.path.join(out_dir, "roc.csv"), roc_csv(curves["TypeI"] + curves["TypeII"]))
    if not args.no_plot:
        atomic_write(os.path.join(out_dir, "roc.svg"), roc_svg(curves))
    return EXIT_OK


def localize_csv(errors: dict) -> str:
    lines = ["detector,error,count"]
    for det, err in errors.items():
        vals, counts = np.unique(err, return_counts=True)
        lines += [f"{det},{v},{c}" for v, c in zip(vals.tolist(), counts.tolist())]
    return "\n".join(lines) + "\n"


def cmd_localize(config, out_dir, args):
    write_manifest(out_dir, "localize", config, ["trials.log", "localize.csv"])
    tl = run_trials(config, progress=_progress)
    atomic_write(os.path.join(out_dir, "trials.log"), tl.dumps())
    errors = localization_errors(tl)
    atomic_write(os.path.join(out_dir, "localize.csv"), localize_csv(errors))
    for det, err in errors.items():
        print(f"{det}: median |error| = {np.median(np.abs(err)):g} over {err.size} windows")
    return EXIT_OK


def cmd_stale(config, out_dir, args):
    write_manifest(out_dir, "stale-mmse", config, ["stale_mmse.csv"])
    fresh, stale = stale_mmse_diagnostic(config, samples=args.samples)
    text = f"mse_fresh,mse_stale,ratio\n{_fmt(fresh)},{_fmt(stale)},{_fmt(stale / fresh)}\n"
    atomic_write(os.path.join(out_dir, "stale_mmse.csv"), text)
    print(text, end="")
    return EXIT_OK


def cmd_selftest(config, out_dir, args):
    from .selftest import run_selftest

    failures = run_selftest(print)
    if failures:
        for name in failures:
            print(f"FAILED: {name}", file=sys.stderr)
        return EXIT_SELFTEST
    return EXIT_OK


COMMANDS = {"roc": cmd_roc, "localize": cmd_localize, "stale-mmse": cmd_stale, "selftest": cmd_selftest}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="plain 'key = value' config file")
    common.add_argument("--manifest", help="rerun exactly the configuration stored in a manifest.json")
    common.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or .)")
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", dest="trials_per_hypothesis", type=int)
    common.add_argument("--snr-db", type=float)
    common.add_argument("--delta-chi-deg", type=float)
    common.add_argument("--k", type=int)
    common.add_argument("--m", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--sampler", dest="sampler_mode", choices=("cascaded", "gaussian"))
    common.add_argument("--threshold-grid", metavar="MIN:MAX:STEPS")
    common.add_argument("--workers", type=int)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="irsdetect", description="IRS covariance change detection experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    roc = sub.add_parser("roc", parents=[common], help="P_MD / P_FA trade-off")
    roc.add_argument("--no-plot", action="store_true")
    sub.add_parser("localize", parents=[common], help="change-time error histograms")
    st = sub.add_parser("stale-mmse", parents=[common], help="stale covariance MMSE diagnostic")
    st.add_argument("--samples", type=int, default=20000)
    sub.add_parser("selftest", parents=[common], help="run the numerical oracles")
    return p


_FLAG_KEYS = ("seed", "trials_per_hypothesis", "snr_db", "delta_chi_deg", "k", "m", "n", "sampler_mode", "threshold_grid", "workers")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.manifest:
            command, config = load_manifest(args.manifest)
            if command != args.command:
                raise ConfigError("manifest", f"recorded command is {command!r}, not {args.command!r}")
        else:
            overrides = {k: getattr(args, k) for k in _FLAG_KEYS}
            for item in args.set:
                if "=" not in item:
                    raise ConfigError(item, "expected KEY=VALUE")
                key, val = item.split("=", 1)
                overrides[key.strip()] = val
            config = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV) or "."
    try:
        os.makedirs(out_dir, exist_ok=True)
        return COMMANDS[args.command](config, out_dir, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
