"""Flat ``key = value`` run configuration files."""

from dataclasses import dataclass, field
from pathlib import Path

from .events import RunConfig
from .exceptions import ConfigError, QEraserError
from .optics import SlitGeometry
from .pipeline import DEFAULT_BINS, DEFAULT_WINDOW

__all__ = ["KEYS", "CliConfig", "parse_config_text", "load_config", "resolve", "dump_config"]

# key -> (parser, default); None default means required
KEYS = {
    "mode": (str, "kim"),
    "seed": (int, 0),
    "n_pairs": (int, 1_000_000),
    "emission_rate_hz": (float, 1e5),
    "wavelength_m": (float, 702.2e-9),
    "slit_separation_m": (float, 0.3e-3),
    "slit_width_m": (float, 0.1e-3),
    "screen_distance_m": (float, 1.0),
    "scan_halfwidth_m": (float, 7.0e-3),
    "extra_path_m": (float, 2.5),
    "window_s": (float, DEFAULT_WINDOW),
    "bins": (int, DEFAULT_BINS),
    "scan": (str, "continuous"),
    "scan_positions": (str, ""),
}


@dataclass
class CliConfig:
    config_path: Path
    out_dir: Path
    overrides: dict = field(default_factory=dict)


def parse_config_text(text, source="<config>"):
    """Parse config text into a ``{key: raw string}`` mapping."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'", key=line)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}", key=key)
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}", key=key)
        values[key] = value
    return values


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", key="config") from exc
    return parse_config_text(text, str(path))


def _typed(raw):
    out = {}
    for key, (parser, default) in KEYS.items():
        if key not in raw:
            out[key] = default
            continue
        try:
            out[key] = parser(raw[key]) if parser is not int else int(str(raw[key]), 0)
        except ValueError:
            raise ConfigError(f"invalid value {raw[key]!r} for {key}", key=key) from None
    return out


def resolve(raw, overrides=None):
    """Turn raw string values plus overrides into ``(RunConfig, window, bins)``."""
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if key not in KEYS:
            raise ConfigError(f"unknown override key {key!r}", key=key)
        merged[key] = str(value)
    v = _typed(merged)

    if v["scan"] not in ("continuous", "stepper"):
        raise ConfigError(f"scan must be continuous or stepper, got {v['scan']!r}", key="scan")
    positions = None
    if v["scan"] == "stepper":
        try:
            positions = tuple(float(p) for p in v["scan_positions"].split(",") if p.strip())
        except ValueError:
            raise ConfigError("scan_positions must be comma-separated numbers",
                              key="scan_positions") from None
        if not positions:
            raise ConfigError("stepper scan needs scan_positions", key="scan_positions")
    elif v["scan_positions"].strip():
        raise ConfigError("scan_positions only applies to scan = stepper", key="scan_positions")
    if v["window_s"] <= 0:
        raise ConfigError("window_s must be > 0", key="window_s")
    if v["bins"] < 3:
        raise ConfigError("bins must be >= 3", key="bins")

    geom_keys = {
        "wavelength": "wavelength_m",
        "slit_separation": "slit_separation_m",
        "slit_width": "slit_width_m",
        "screen_distance": "screen_distance_m",
        "scan_halfwidth": "scan_halfwidth_m",
    }
    try:
        geom = SlitGeometry(**{k: v[key] for k, key in geom_keys.items()})
    except QEraserError as exc:
        raise ConfigError(f"invalid geometry: {exc}", key=_guess_key(str(exc), geom_keys)) from exc
    try:
        run = RunConfig(
            seed=v["seed"],
            n_pairs=v["n_pairs"],
            emission_rate=v["emission_rate_hz"],
            geometry=geom,
            mode=v["mode"],
            extra_path=v["extra_path_m"],
            scan_positions=positions,
        )
    except (QEraserError, ValueError) as exc:
        names = {"seed": "seed", "n_pairs": "n_pairs", "emission_rate": "emission_rate_hz",
                 "extra_path": "extra_path_m", "scan position": "scan_positions",
                 "ApparatusMode": "mode"}
        raise ConfigError(f"invalid configuration: {exc}", key=_guess_key(str(exc), names)) from exc
    return run, v["window_s"], v["bins"]


def _guess_key(message, names):
    for needle, key in names.items():
        if needle in message:
            return key
    return None


def dump_config(run, window, bins):
    """Canonical config text that :func:`resolve` maps back to the same run."""
    g = run.geometry
    stepper = run.scan_positions is not None
    rows = [
        ("mode", run.mode.value),
        ("seed", run.seed),
        ("n_pairs", run.n_pairs),
        ("emission_rate_hz", repr(float(run.emission_rate))),
        ("wavelength_m", repr(g.wavelength)),
        ("slit_separation_m", repr(g.slit_separation)),
        ("slit_width_m", repr(g.slit_width)),
        ("screen_distance_m", repr(g.screen_distance)),
        ("scan_halfwidth_m", repr(g.scan_halfwidth)),
        ("extra_path_m", repr(float(run.extra_path))),
        ("window_s", repr(float(window))),
        ("bins", bins),
        ("scan", "stepper" if stepper else "continuous"),
    ]
    if stepper:
        rows.append(("scan_positions", ",".join(repr(p) for p in run.scan_positions)))
    return "".join(f"{k} = {val}\n" for k, val in rows)
