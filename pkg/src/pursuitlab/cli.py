"""Command-line entry point and result persistence.

Subcommands:
  run       execute the experiment matrix and write a results archive
  report    emit summary tables and the statistics report from an archive
  curves    emit learning-curve CSVs from an archive
  validate  parse and check a config file, nothing else

The config file is flat YAML; every key has a default matching the
reference parameter table, so an empty file runs the full experiment.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .env import ConfigError, GridConfig, PotentialMode, TeamRewardMode
from .harness import (
    METRICS,
    PAIRINGS,
    MatrixResult,
    RunPlan,
    SeedResult,
    Condition,
    Paradigm,
    SpeedRegime,
    final_window_mean,
    pairing_key,
    run_matrix,
)
from .learners import EpsilonSchedule, LearnerParams
from .stats import compare_configs

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

CONFIG_DEFAULTS = {
    "grid_width": 8,
    "grid_height": 8,
    "obstacles": [],
    "n_predators": 2,
    "n_prey": 2,
    "max_timesteps": 200,
    "stamina_max": 5,
    "regen_on_stay": 1,
    "capture_reward": 100.0,
    "prey_capture_penalty": -100.0,
    "predator_step_cost": -5.0,
    "shaping_factor": 1.0,
    "gamma": 0.90,
    "team_reward_mode": "mean",
    "potential_mode": "nearest",
    "prey_shaping": True,
    "stamina_enabled": True,
    "alpha": 0.25,
    "episodes": 40000,
    "seeds": 10,
    "window_size": 10000,
    "epsilon_start": 1.0,
    "epsilon_end": 0.1,
    "epsilon_decay_horizon": 23000,
    "output_dir": "results",
    "curve_stride": 100,
    "curve_smoothing": 500,
}


@dataclass
class ExperimentConfig:
    plan: RunPlan
    output_dir: str
    curve_stride: int
    curve_smoothing: int
    raw: dict = field(default_factory=dict)

    def digest(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


def parse_config(text: str) -> ExperimentConfig:
    """Parse a flat YAML config document, rejecting unknown keys."""
    try:
        loaded = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    if loaded is None:
        loaded = {}
    if not isinstance(loaded, dict):
        raise ConfigError("config must be a mapping of flat keys")
    unknown = set(loaded) - set(CONFIG_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    values = dict(CONFIG_DEFAULTS)
    values.update(loaded)

    seeds = values["seeds"]
    if isinstance(seeds, int):
        if seeds < 1:
            raise ConfigError("seeds: need at least one seed")
        seeds = tuple(range(seeds))
    else:
        seeds = tuple(int(s) for s in seeds)

    try:
        grid = GridConfig(
            width=int(values["grid_width"]),
            height=int(values["grid_height"]),
            obstacles=frozenset(tuple(c) for c in values["obstacles"]),
            n_predators=int(values["n_predators"]),
            n_prey=int(values["n_prey"]),
            max_timesteps=int(values["max_timesteps"]),
            stamina_max=int(values["stamina_max"]),
            regen_on_stay=int(values["regen_on_stay"]),
            capture_reward=float(values["capture_reward"]),
            prey_capture_penalty=float(values["prey_capture_penalty"]),
            predator_step_cost=float(values["predator_step_cost"]),
            shaping_factor=float(values["shaping_factor"]),
            gamma=float(values["gamma"]),
            team_reward_mode=TeamRewardMode(values["team_reward_mode"]),
            potential_mode=PotentialMode(values["potential_mode"]),
            prey_shaping=bool(values["prey_shaping"]),
            stamina_enabled=bool(values["stamina_enabled"]),
        )
        learner = LearnerParams(alpha=float(values["alpha"]),
                                gamma=float(values["gamma"]))
        schedule = EpsilonSchedule(
            start=float(values["epsilon_start"]),
            end=float(values["epsilon_end"]),
            decay_horizon=int(values["epsilon_decay_horizon"]),
        )
        plan = RunPlan(
            episodes=int(values["episodes"]),
            seeds=seeds,
            window_size=min(int(values["window_size"]), int(values["episodes"])),
            grid=grid,
            learner=learner,
            schedule=schedule,
        )
    except (ValueError, ConfigError) as exc:
        raise ConfigError(str(exc)) from exc

    resolved = dict(values)
    resolved["seeds"] = list(seeds)
    resolved["obstacles"] = sorted(list(c) for c in grid.obstacles)
    return ExperimentConfig(
        plan=plan,
        output_dir=str(values["output_dir"]),
        curve_stride=int(values["curve_stride"]),
        curve_smoothing=int(values["curve_smoothing"]),
        raw=resolved,
    )


def serialize_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.raw, sort_keys=True)


# ---------------------------------------------------------------------------
# Archive layout: <out>/manifest.json, <out>/config.yaml,
# <out>/runs/<pairing>_<regime>_seed<k>.csv
# ---------------------------------------------------------------------------

def _run_csv_path(out: Path, pairing: str, regime: SpeedRegime,
                  seed: int) -> Path:
    return out / "runs" / f"{pairing}_{regime.value}_seed{seed}.csv"


def write_archive(out: Path, config: ExperimentConfig,
                  matrix: MatrixResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "runs").mkdir(exist_ok=True)
    for (pairing, regime, seed), result in sorted(
            matrix.results.items(), key=lambda kv: (kv[0][0], kv[0][1].value, kv[0][2])):
        path = _run_csv_path(out, pairing, regime, seed)
        with path.open("w", newline="") as fh:
            fh.write("episode,episode_length,predator_reward,prey_reward\n")
            for ep in range(len(result.lengths)):
                fh.write(f"{ep},{int(result.lengths[ep])},"
                         f"{float(result.predator_rewards[ep])!r},"
                         f"{float(result.prey_rewards[ep])!r}\n")
    manifest = {
        "tool": "pursuitlab",
        "version": __version__,
        "config_digest": config.digest(),
        "pairings": sorted({p for (p, _, _) in matrix.results}),
        "regimes": sorted({r.value for (_, r, _) in matrix.results}),
        "seeds": list(matrix.plan.seeds),
        "episodes": matrix.plan.episodes,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (out / "config.yaml").write_text(serialize_config(config))


def load_archive(out: Path) -> tuple:
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no archive manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    config = parse_config((out / "config.yaml").read_text())
    plan = config.plan
    results = {}
    for pairing in manifest["pairings"]:
        pred, prey = pairing.split("-")
        for regime_value in manifest["regimes"]:
            regime = SpeedRegime(regime_value)
            for seed in manifest["seeds"]:
                path = _run_csv_path(out, pairing, regime, seed)
                if not path.exists():
                    raise FileNotFoundError(f"missing run file {path}")
                data = np.genfromtxt(path, delimiter=",", skip_header=1)
                data = np.atleast_2d(data)
                condition = Condition(Paradigm(pred), Paradigm(prey),
                                      regime, seed)
                results[(pairing, regime, seed)] = SeedResult(
                    condition=condition,
                    lengths=data[:, 1].astype(np.int32),
                    predator_rewards=data[:, 2],
                    prey_rewards=data[:, 3],
                    window=plan.window_size,
                )
    return config, MatrixResult(plan=plan, results=results)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

METRIC_HEADERS = {
    "episode_length": "Episode Length",
    "predator_reward": "Predator Reward",
    "prey_reward": "Prey Reward",
}


def summary_cells(matrix: MatrixResult, regime: SpeedRegime):
    """Per-pairing (mean, sd, n) across seed-level final-window means."""
    rows = {}
    for (pred, prey) in PAIRINGS:
        pairing = pairing_key(pred, prey)
        cells = {}
        for metric in METRICS:
            values = list(matrix.final_window_by_seed(
                pairing, regime, metric).values())
            if values:
                mean = float(np.mean(values))
                sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
                cells[metric] = (mean, sd, len(values))
            else:
                cells[metric] = None
        rows[pairing] = cells
    return rows


def emit_summary(matrix: MatrixResult, out: Path):
    """Appendix-style per-regime tables: 4 pairings x 3 metrics, mean +/- sd.

    Returns the formatted text; also writes summary.txt and summary.csv.
    """
    lines = []
    csv_rows = [("regime", "pairing", "metric", "mean", "sd", "n_seeds")]
    for regime in matrix.regimes():
        lines.append(f"Final performance, regime: {regime.value} "
                     f"(mean ± sd over seeds)")
        header = f"{'Configuration':<12}" + "".join(
            f"{METRIC_HEADERS[m]:>20}" for m in METRICS)
        lines.append(header)
        for pairing, cells in summary_cells(matrix, regime).items():
            row = f"{pairing.upper():<12}"
            for metric in METRICS:
                cell = cells[metric]
                if cell is None:
                    row += f"{'—':>20}"
                else:
                    mean, sd, n = cell
                    row += f"{f'{mean:.1f} ± {sd:.1f}':>20}"
                    csv_rows.append((regime.value, pairing, metric,
                                     repr(float(mean)), repr(float(sd)), n))
            lines.append(row)
        lines.append("")
    text = "\n".join(lines)
    (out / "summary.txt").write_text(text)
    with (out / "summary.csv").open("w", newline="") as fh:
        csv.writer(fh).writerows(csv_rows)
    return text


def emit_stats_report(matrix: MatrixResult, out: Path):
    """Per (regime, metric) family: all 6 pairwise tests with raw p,
    Holm-adjusted p, Cliff's delta, magnitude label, and reject flag."""
    expected = {pairing_key(a, b) for (a, b) in PAIRINGS}
    missing = []
    for regime in matrix.regimes():
        for pairing in expected:
            if not matrix.seed_results(pairing, regime):
                missing.append(f"{pairing}/{regime.value}")
    if missing:
        raise ValueError(f"incomplete matrix, missing cells: {sorted(missing)}")
    if not matrix.results:
        raise ValueError("no results to report")

    lines = []
    csv_rows = [("regime", "metric", "config_a", "config_b", "p_raw",
                 "p_holm", "cliffs_delta", "magnitude", "reject_at_005")]
    for regime in matrix.regimes():
        for metric in METRICS:
            lines.append(f"Regime {regime.value}, metric {metric}:")
            for test in compare_configs(matrix, regime, metric):
                a, b, _, _ = test.comparison
                flag = "reject" if test.reject_at_005 else "keep"
                note = " (degenerate)" if test.degenerate else ""
                lines.append(
                    f"  {a.upper():>8} vs {b.upper():<8} "
                    f"p={test.p_raw:.6f} p_holm={test.p_adjusted:.6f} "
                    f"delta={test.delta:+.3f} ({test.delta_label}) "
                    f"{flag}{note}")
                csv_rows.append((regime.value, metric, a, b,
                                 repr(float(test.p_raw)),
                                 repr(float(test.p_adjusted)),
                                 repr(float(test.delta)), test.delta_label,
                                 int(test.reject_at_005)))
            lines.append("")
    text = "\n".join(lines)
    (out / "stats.txt").write_text(text)
    with (out / "stats.csv").open("w", newline="") as fh:
        csv.writer(fh).writerows(csv_rows)
    return text


def rolling_mean(series: np.ndarray, window: int) -> np.ndarray:
    """Trailing rolling mean with partial windows at the start."""
    series = np.asarray(series, dtype=np.float64)
    cs = np.concatenate(([0.0], np.cumsum(series)))
    idx = np.arange(1, len(series) + 1)
    lo = np.maximum(0, idx - window)
    return (cs[idx] - cs[lo]) / (idx - lo)


def emit_curves(matrix: MatrixResult, out: Path, stride: int,
                smoothing: int = 500) -> list:
    """One CSV per (regime, metric): cross-seed mean of the rolling mean,
    sampled every `stride` episodes."""
    if not matrix.results:
        raise ValueError("no results to emit curves from")
    curves_dir = out / "curves"
    curves_dir.mkdir(parents=True, exist_ok=True)
    written = []
    pairings = matrix.pairings()
    for regime in matrix.regimes():
        for metric in METRICS:
            columns = {}
            for pairing in pairings:
                runs = matrix.seed_results(pairing, regime)
                if not runs:
                    continue
                smoothed = [rolling_mean(r.series(metric), smoothing)
                            for r in runs.values()]
                columns[pairing] = np.mean(smoothed, axis=0)
            if not columns:
                continue
            episodes = range(0, matrix.plan.episodes, stride)
            path = curves_dir / f"{regime.value}_{metric}.csv"
            with path.open("w", newline="") as fh:
                fh.write("episode," + ",".join(columns) + "\n")
                for ep in episodes:
                    cells = ",".join(repr(float(columns[p][ep]))
                                     for p in columns)
                    fh.write(f"{ep},{cells}\n")
            written.append(path)
    return written


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


REGIME_CHOICES = {
    "base": (SpeedRegime.EQUAL_BASE,),
    "pred-fast": (SpeedRegime.PREDATOR_FAST,),
    "prey-fast": (SpeedRegime.PREY_FAST,),
    "all": tuple(SpeedRegime),
}

PAIRING_CHOICES = {pairing_key(a, b): ((a, b),) for (a, b) in PAIRINGS}
PAIRING_CHOICES["all"] = PAIRINGS


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pursuitlab",
                     description="Predator-prey tabular MARL laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, default=None,
                       help="YAML config file (defaults reproduce the "
                            "reference parameter table)")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (overrides config)")

    run = sub.add_parser("run", help="execute the experiment matrix")
    add_common(run)
    run.add_argument("--episodes", type=int, default=None)
    run.add_argument("--seeds", type=int, default=None,
                     help="use seeds 0..N-1")
    run.add_argument("--stride", type=int, default=None)
    run.add_argument("--regime", choices=sorted(REGIME_CHOICES),
                     default="all")
    run.add_argument("--pairing", choices=sorted(PAIRING_CHOICES),
                     default="all")
    run.add_argument("--workers", type=int, default=None)

    report = sub.add_parser("report", help="summary tables and statistics")
    add_common(report)

    curves = sub.add_parser("curves", help="learning-curve CSVs")
    add_common(curves)
    curves.add_argument("--stride", type=int, default=None)

    validate = sub.add_parser("validate", help="check a config file")
    validate.add_argument("--config", type=Path, default=None)
    return parser


def _load_config(path) -> ExperimentConfig:
    if path is None:
        return parse_config("")
    return parse_config(Path(path).read_text())


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    try:
        if args.command == "validate":
            config = _load_config(args.config)
            print(f"config OK (digest {config.digest()[:12]}, "
                  f"{config.plan.episodes} episodes, "
                  f"{len(config.plan.seeds)} seeds)")
            return EXIT_OK

        if args.command == "run":
            config = _load_config(args.config)
            plan = config.plan
            overrides = {}
            if args.episodes is not None:
                overrides["episodes"] = args.episodes
                overrides["window_size"] = min(plan.window_size, args.episodes)
            if args.seeds is not None:
                overrides["seeds"] = tuple(range(args.seeds))
            if overrides:
                plan = RunPlan(
                    episodes=overrides.get("episodes", plan.episodes),
                    seeds=overrides.get("seeds", plan.seeds),
                    window_size=overrides.get("window_size", plan.window_size),
                    grid=plan.grid, learner=plan.learner,
                    schedule=plan.schedule)
                config = ExperimentConfig(
                    plan=plan, output_dir=config.output_dir,
                    curve_stride=config.curve_stride,
                    curve_smoothing=config.curve_smoothing,
                    raw={**config.raw,
                         "episodes": plan.episodes,
                         "window_size": plan.window_size,
                         "seeds": list(plan.seeds)})
            out = Path(args.out) if args.out else Path(config.output_dir)
            matrix = run_matrix(
                plan,
                pairings=PAIRING_CHOICES[args.pairing],
                regimes=REGIME_CHOICES[args.regime],
                workers=args.workers,
                progress=sys.stderr,
            )
            write_archive(out, config, matrix)
            print(f"wrote archive to {out} "
                  f"({len(matrix.results)} runs)")
            return EXIT_OK

        if args.command == "report":
            config = _load_config(args.config)
            out = Path(args.out) if args.out else Path(config.output_dir)
            _, matrix = load_archive(out)
            print(emit_summary(matrix, out))
            print(emit_stats_report(matrix, out))
            return EXIT_OK

        if args.command == "curves":
            config = _load_config(args.config)
            out = Path(args.out) if args.out else Path(config.output_dir)
            archive_config, matrix = load_archive(out)
            stride = args.stride or archive_config.curve_stride
            written = emit_curves(matrix, out, stride,
                                  archive_config.curve_smoothing)
            for path in written:
                print(f"wrote {path}")
            return EXIT_OK

    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
