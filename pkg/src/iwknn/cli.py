"""Command-line entry point: simulate, train, locate, bench.

Settings come from ``--config`` (``key = value`` lines, ``#`` comments) and
flags; a flag wins over the config. Thresholds, K and T have no built-in
defaults and must be given one way or the other.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import store
from .bench import ALGORITHMS, LocatorSettings, Scenario, bench, run_stream, simulate, write_report
from .locator import default_candidate_radius
from .selection import SelectionThresholds, offline_select
from .sim import NoiseModel

CAMPAIGN_FILE = "campaign.txt"
STREAM_FILE = "stream.csv"

SCENARIO_KEYS = {
    "width": float, "height": float, "grid_pitch": float, "n_aps": int, "tx_power": float,
    "exponent": float, "d0": float, "samples": int, "queries": int, "slot_interval": float,
    "speed": float, "rssi_min": float,
}
NOISE_KEYS = {"sigma": "sigma_dbm", "p_loss": "p_loss", "p_fade": "p_fade",
              "fade_depth": "fade_depth_dbm", "fade_sigma": "fade_sigma_dbm"}


class CliError(Exception):
    pass


def parse_config(path) -> dict[str, str]:
    out = {}
    for no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise CliError(f"{path}:{no}: expected 'key = value', got {raw.strip()!r}")
        out[key.strip()] = value.strip()
    return out


def _parse_bool(text: str) -> bool:
    v = text.lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise CliError(f"expected on/off, got {text!r}")


class Settings:
    """Merged view of flags over config values."""

    def __init__(self, args: argparse.Namespace):
        self.config = parse_config(args.config) if args.config else {}
        self.args = args

    def get(self, key: str, cast=str, *, required: bool = False, default=None):
        flag = getattr(self.args, key, None)
        if flag is not None:
            return cast(flag) if not isinstance(flag, cast) else flag
        if key in self.config:
            try:
                return cast(self.config[key])
            except ValueError:
                raise CliError(f"config key {key!r}: cannot parse {self.config[key]!r}") from None
        if required:
            raise CliError(f"missing required setting {key!r} (pass --{key.replace('_', '-')} "
                           f"or set it in --config)")
        return default

    def thresholds(self, rssi_min: float) -> SelectionThresholds:
        given = self.get("rssi_min", float)
        if given is not None and given != rssi_min:
            raise CliError(f"rssi_min {given} disagrees with the input data ({rssi_min})")
        return SelectionThresholds(self.get("theta1", float, required=True),
                                   self.get("theta2", float, required=True),
                                   self.get("epsilon", float, required=True), rssi_min)

    def scenario(self) -> Scenario:
        kw = {k: self.get(k, cast) for k, cast in SCENARIO_KEYS.items()}
        noise = {field: self.get(k, float) for k, field in NOISE_KEYS.items()}
        return Scenario(noise=NoiseModel(**{k: v for k, v in noise.items() if v is not None}),
                        **{k: v for k, v in kw.items() if v is not None})


def _locator_settings(cfg: Settings, radio_map, stream) -> LocatorSettings:
    thresholds = cfg.thresholds(radio_map.rssi_min)
    if stream.rssi_min != radio_map.rssi_min:
        raise CliError("stream and map disagree on the missing-signal sentinel")
    radius = cfg.get("candidate_radius", float)
    if radius is None:
        max_speed = cfg.get("max_speed", float)
        dt = stream.meta.get("slot_interval")
        pitch = radio_map.meta.get("grid_pitch")
        if max_speed is None or dt is None or pitch is None:
            raise CliError("set candidate_radius, or max_speed with a stream that records "
                           "slot_interval and a map that records grid_pitch")
        radius = default_candidate_radius(max_speed, float(dt), float(pitch))
    return LocatorSettings(cfg.get("k", int, required=True), cfg.get("window", int, required=True),
                           thresholds, radius, cfg.get("history_depth", int, default=3),
                           cfg.get("filtering", _parse_bool, default=True))


def _required_path(args, name: str) -> Path:
    value = getattr(args, name)
    if value is None:
        raise CliError(f"--{name} is required for '{args.command}'")
    return Path(value)


def cmd_simulate(args, cfg: Settings) -> None:
    seed = cfg.get("seed", int, required=True)
    scenario = cfg.scenario()
    out = _required_path(args, "out")
    out.mkdir(parents=True, exist_ok=True)
    campaign, stream = simulate(scenario, seed)
    store.save_campaign(campaign, out / CAMPAIGN_FILE)
    store.save_stream(stream, campaign.registry, out / STREAM_FILE, rssi_min=scenario.rssi_min,
                      meta={"slot_interval": repr(scenario.slot_interval), "seed": seed})
    print(f"wrote {out / CAMPAIGN_FILE} ({campaign.n_points} points x {campaign.n_aps} APs) "
          f"and {out / STREAM_FILE} ({len(stream)} slots)")


def cmd_train(args, cfg: Settings) -> None:
    campaign = store.load_campaign(_required_path(args, "campaign"))
    out = _required_path(args, "out")
    radio_map = offline_select(campaign, cfg.thresholds(campaign.rssi_min))
    out.parent.mkdir(parents=True, exist_ok=True)
    store.save_radiomap(radio_map, out)
    prov = out.with_name(out.name + ".provenance.csv")
    store.write_provenance(radio_map.provenance, prov)
    print(f"wrote {out} with {len(radio_map.provenance)} eliminated entries (log: {prov})")


def cmd_locate(args, cfg: Settings) -> None:
    radio_map = store.load_radiomap(_required_path(args, "map"))
    stream = store.load_stream(_required_path(args, "stream"))
    algo = cfg.get("algo", required=True)
    if algo not in ALGORITHMS:
        raise CliError(f"unknown algorithm {algo!r}")
    out = _required_path(args, "out")
    settings = _locator_settings(cfg, radio_map, stream)
    estimates = run_stream(radio_map, stream.slots, algo, settings)
    out.parent.mkdir(parents=True, exist_ok=True)
    store.write_trace(stream.slots, estimates, algo, out)
    print(f"wrote {out} ({len(estimates)} estimates, {algo})")


def cmd_bench(args, cfg: Settings) -> None:
    radio_map = store.load_radiomap(_required_path(args, "map"))
    stream = store.load_stream(_required_path(args, "stream"))
    out = _required_path(args, "out")
    report = bench(radio_map, stream.slots, _locator_settings(cfg, radio_map, stream))
    write_report(report, out)
    for algo, r in report.results.items():
        e, lat = r.error_summary, r.latency_summary
        print(f"{algo:6s} mean {e.mean:.3f} m  p95 {e.p95:.3f} m  <2m {e.frac_under_2m:.3f}  "
              f"median latency {lat.median:.1f} us")


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "locate": cmd_locate, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--map", help="radio map file")
    common.add_argument("--stream", help="online stream CSV")
    common.add_argument("--campaign", help="offline campaign file")
    common.add_argument("--algo", choices=ALGORITHMS)
    common.add_argument("--k", type=int)
    common.add_argument("--window", type=int, help="window length T in slots")
    common.add_argument("--theta1", type=float, help="loss-rate threshold")
    common.add_argument("--theta2", type=float, help="fluctuation threshold")
    common.add_argument("--epsilon", type=float, help="filter tail mass")
    common.add_argument("--rssi-min", dest="rssi_min", type=float)
    common.add_argument("--candidate-radius", dest="candidate_radius", type=float)
    common.add_argument("--out", help="output file or directory")

    parser = argparse.ArgumentParser(prog="iwknn", description="WiFi fingerprint positioning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write a synthetic campaign and stream")
    sub.add_parser("train", parents=[common], help="build a radio map from a campaign")
    sub.add_parser("locate", parents=[common], help="run one algorithm over a stream")
    sub.add_parser("bench", parents=[common], help="compare all algorithms on a stream")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args, Settings(args))
    except (CliError, ValueError, KeyError, OSError, RuntimeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"iwknn {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
