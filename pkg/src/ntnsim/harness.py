"""Experiment orchestration: plain-text config, per-seed runs of the three
methods (rr / maddpg / tts-maddpg), CSV metrics, and result comparison.

Config format: `key = value` lines under `[section]` headers, or dotted
`section.key = value` lines. `#` and `;` start full-line comments. Every key
has a default; unknown keys are rejected with their line number.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelConfig
from .madrl import EnvSpec, TrainConfig, Trainer
from .scenario import ScenarioConfig
from .traffic import TrafficConfig

METHODS = ("rr", "maddpg", "tts-maddpg")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    method: str = "tts-maddpg"
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "results"
    k_obs: int = 8
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def env_spec(self) -> EnvSpec:
        return EnvSpec(self.scenario, self.traffic, self.channel, self.k_obs)

    def train_config(self, seed: int) -> TrainConfig:
        tc = TrainConfig(**vars(self.train))
        tc.method = self.method
        tc.seed = seed
        return tc

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"run.method must be one of {METHODS}, got {self.method!r}")
        if not self.seeds:
            raise ConfigError("run.seeds must list at least one seed")
        if self.k_obs < 1:
            raise ConfigError("train.k_obs must be positive")
        try:
            self.scenario.validate()
            self.train.validate()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if self.traffic.lambda_pkts < 0 or self.traffic.packet_bits <= 0:
            raise ConfigError("traffic rates and packet size must be positive")
        if self.traffic.deadline_slots < 1:
            raise ConfigError("traffic.deadline_slots must be at least 1")


def _set_nodes(cfg: ExperimentConfig, attr: str, value) -> None:
    for p in cfg.scenario.nodes:
        setattr(p, attr, value)


def _set_all_platforms(cfg: ExperimentConfig, attr: str, value) -> None:
    for p in cfg.scenario.platforms:
        setattr(p, attr, value)


def _seeds_str(cfg: ExperimentConfig) -> str:
    return ", ".join(str(s) for s in cfg.seeds)


def _parse_seeds(raw: str) -> list[int]:
    toks = [t for t in raw.replace(",", " ").split() if t]
    if not toks:
        raise ValueError("empty seed list")
    return [int(t) for t in toks]


# (section, key, kind, getter, setter); kind drives parsing and formatting.
_SCHEMA = [
    ("run", "method", "str", lambda c: c.method, lambda c, v: setattr(c, "method", v)),
    ("run", "seeds", "seeds", _seeds_str, lambda c, v: setattr(c, "seeds", v)),
    ("run", "out_dir", "str", lambda c: c.out_dir, lambda c, v: setattr(c, "out_dir", v)),
    ("scenario", "area_w_m", "float", lambda c: c.scenario.area_w_m,
     lambda c, v: setattr(c.scenario, "area_w_m", v)),
    ("scenario", "area_h_m", "float", lambda c: c.scenario.area_h_m,
     lambda c, v: setattr(c.scenario, "area_h_m", v)),
    ("scenario", "n_ues", "int", lambda c: c.scenario.n_ues,
     lambda c, v: setattr(c.scenario, "n_ues", v)),
    ("scenario", "ue_speed_min_mps", "float", lambda c: c.scenario.ue_speed_min_mps,
     lambda c, v: setattr(c.scenario, "ue_speed_min_mps", v)),
    ("scenario", "ue_speed_max_mps", "float", lambda c: c.scenario.ue_speed_max_mps,
     lambda c, v: setattr(c.scenario, "ue_speed_max_mps", v)),
    ("scenario", "slot_seconds", "float", lambda c: c.scenario.slot_seconds,
     lambda c, v: setattr(c.scenario, "slot_seconds", v)),
    ("scenario", "donor_altitude_m", "float", lambda c: c.scenario.donor.altitude_m,
     lambda c, v: setattr(c.scenario.donor, "altitude_m", v)),
    ("scenario", "node_altitude_m", "float", lambda c: c.scenario.nodes[0].altitude_m,
     lambda c, v: _set_nodes(c, "altitude_m", v)),
    ("scenario", "donor_carrier_hz", "float", lambda c: c.scenario.donor.carrier_hz,
     lambda c, v: setattr(c.scenario.donor, "carrier_hz", v)),
    ("scenario", "donor_bandwidth_hz", "float", lambda c: c.scenario.donor.bandwidth_hz,
     lambda c, v: setattr(c.scenario.donor, "bandwidth_hz", v)),
    ("scenario", "node_carrier_hz", "float", lambda c: c.scenario.nodes[0].carrier_hz,
     lambda c, v: _set_nodes(c, "carrier_hz", v)),
    ("scenario", "node_bandwidth_hz", "float", lambda c: c.scenario.nodes[0].bandwidth_hz,
     lambda c, v: _set_nodes(c, "bandwidth_hz", v)),
    ("scenario", "donor_tx_power_dbm", "float", lambda c: c.scenario.donor.tx_power_dbm,
     lambda c, v: setattr(c.scenario.donor, "tx_power_dbm", v)),
    ("scenario", "node_tx_power_dbm", "float", lambda c: c.scenario.nodes[0].tx_power_dbm,
     lambda c, v: _set_nodes(c, "tx_power_dbm", v)),
    ("scenario", "antenna_gain_dbi", "float", lambda c: c.scenario.donor.antenna_gain_dbi,
     lambda c, v: _set_all_platforms(c, "antenna_gain_dbi", v)),
    ("scenario", "noise_figure_db", "float", lambda c: c.scenario.donor.noise_figure_db,
     lambda c, v: _set_all_platforms(c, "noise_figure_db", v)),
    ("scenario", "node_max_speed_mps", "float", lambda c: c.scenario.nodes[0].max_speed_mps,
     lambda c, v: _set_nodes(c, "max_speed_mps", v)),
    ("traffic", "lambda", "float", lambda c: c.traffic.lambda_pkts,
     lambda c, v: setattr(c.traffic, "lambda_pkts", v)),
    ("traffic", "packet_bits", "int", lambda c: c.traffic.packet_bits,
     lambda c, v: setattr(c.traffic, "packet_bits", v)),
    ("traffic", "deadline_slots", "int", lambda c: c.traffic.deadline_slots,
     lambda c, v: setattr(c.traffic, "deadline_slots", v)),
    ("channel", "eta_los_db", "float", lambda c: c.channel.eta_los_db,
     lambda c, v: setattr(c.channel, "eta_los_db", v)),
    ("channel", "eta_nlos_db", "float", lambda c: c.channel.eta_nlos_db,
     lambda c, v: setattr(c.channel, "eta_nlos_db", v)),
    ("channel", "los_a", "float", lambda c: c.channel.los_a,
     lambda c, v: setattr(c.channel, "los_a", v)),
    ("channel", "los_b", "float", lambda c: c.channel.los_b,
     lambda c, v: setattr(c.channel, "los_b", v)),
    ("channel", "backhaul_carrier_hz", "float", lambda c: c.channel.backhaul_carrier_hz,
     lambda c, v: setattr(c.channel, "backhaul_carrier_hz", v)),
    ("channel", "backhaul_bandwidth_hz", "float", lambda c: c.channel.backhaul_bandwidth_hz,
     lambda c, v: setattr(c.channel, "backhaul_bandwidth_hz", v)),
    ("channel", "backhaul_gain_dbi", "float", lambda c: c.channel.backhaul_gain_dbi,
     lambda c, v: setattr(c.channel, "backhaul_gain_dbi", v)),
    ("channel", "ue_noise_figure_db", "float", lambda c: c.channel.ue_noise_figure_db,
     lambda c, v: setattr(c.channel, "ue_noise_figure_db", v)),
    ("channel", "noise_density_dbm_hz", "float", lambda c: c.channel.noise_density_dbm_hz,
     lambda c, v: setattr(c.channel, "noise_density_dbm_hz", v)),
    ("train", "episodes", "int", lambda c: c.train.episodes,
     lambda c, v: setattr(c.train, "episodes", v)),
    ("train", "slots_per_episode", "int", lambda c: c.train.slots_per_episode,
     lambda c, v: setattr(c.train, "slots_per_episode", v)),
    ("train", "gamma", "float", lambda c: c.train.gamma,
     lambda c, v: setattr(c.train, "gamma", v)),
    ("train", "tau", "float", lambda c: c.train.tau,
     lambda c, v: setattr(c.train, "tau", v)),
    ("train", "actor_lr", "float", lambda c: c.train.actor_lr,
     lambda c, v: setattr(c.train, "actor_lr", v)),
    ("train", "critic_lr", "float", lambda c: c.train.critic_lr,
     lambda c, v: setattr(c.train, "critic_lr", v)),
    ("train", "batch_size", "int", lambda c: c.train.batch_size,
     lambda c, v: setattr(c.train, "batch_size", v)),
    ("train", "hidden_width", "int", lambda c: c.train.hidden_width,
     lambda c, v: setattr(c.train, "hidden_width", v)),
    ("train", "traj_hidden_width", "int", lambda c: c.train.traj_hidden_width,
     lambda c, v: setattr(c.train, "traj_hidden_width", v)),
    ("train", "sched_buffer_capacity", "int", lambda c: c.train.sched_buffer_capacity,
     lambda c, v: setattr(c.train, "sched_buffer_capacity", v)),
    ("train", "traj_buffer_capacity", "int", lambda c: c.train.traj_buffer_capacity,
     lambda c, v: setattr(c.train, "traj_buffer_capacity", v)),
    ("train", "warmup_transitions", "int", lambda c: c.train.warmup_transitions,
     lambda c, v: setattr(c.train, "warmup_transitions", v)),
    ("train", "slots_per_update", "int", lambda c: c.train.slots_per_update,
     lambda c, v: setattr(c.train, "slots_per_update", v)),
    ("train", "noise_start", "float", lambda c: c.train.noise_start,
     lambda c, v: setattr(c.train, "noise_start", v)),
    ("train", "noise_end", "float", lambda c: c.train.noise_end,
     lambda c, v: setattr(c.train, "noise_end", v)),
    ("train", "noise_decay_frac", "float", lambda c: c.train.noise_decay_frac,
     lambda c, v: setattr(c.train, "noise_decay_frac", v)),
    ("train", "traj_drift_std", "float", lambda c: c.train.traj_drift_std,
     lambda c, v: setattr(c.train, "traj_drift_std", v)),
    ("train", "traj_drift_floor", "float", lambda c: c.train.traj_drift_floor,
     lambda c, v: setattr(c.train, "traj_drift_floor", v)),
    ("train", "traj_actor_delay", "int", lambda c: c.train.traj_actor_delay,
     lambda c, v: setattr(c.train, "traj_actor_delay", v)),
    ("train", "traj_actor_window", "int", lambda c: c.train.traj_actor_window,
     lambda c, v: setattr(c.train, "traj_actor_window", v)),
    ("train", "traj_anchor_every", "int", lambda c: c.train.traj_anchor_every,
     lambda c, v: setattr(c.train, "traj_anchor_every", v)),
    ("train", "action_reg", "float", lambda c: c.train.action_reg,
     lambda c, v: setattr(c.train, "action_reg", v)),
    ("train", "traj_critic_weight_decay", "float",
     lambda c: c.train.traj_critic_weight_decay,
     lambda c, v: setattr(c.train, "traj_critic_weight_decay", v)),
    ("train", "update_rounds_budget", "int", lambda c: c.train.update_rounds_budget,
     lambda c, v: setattr(c.train, "update_rounds_budget", v)),
    ("train", "eval_every_episodes", "int", lambda c: c.train.eval_every_episodes,
     lambda c, v: setattr(c.train, "eval_every_episodes", v)),
    ("train", "eval_episodes", "int", lambda c: c.train.eval_episodes,
     lambda c, v: setattr(c.train, "eval_episodes", v)),
    ("train", "k_obs", "int", lambda c: c.k_obs,
     lambda c, v: setattr(c, "k_obs", v)),
]

_SECTIONS = {s for s, *_ in _SCHEMA}
_BY_KEY = {(s, k): (kind, setter) for s, k, kind, _, setter in _SCHEMA}


def _convert(raw: str, kind: str, where: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "seeds":
            return _parse_seeds(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"{where}: expected {kind}, got {raw!r}") from e


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig()
    section = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        where = f"{source}:{lineno}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected key = value, got {rawline!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if "." in key:
            sec, key = key.split(".", 1)
            sec, key = sec.strip(), key.strip()
        elif section is None:
            raise ConfigError(f"{where}: key {key!r} appears before any [section]")
        else:
            sec = section
        if (sec, key) not in _BY_KEY:
            raise ConfigError(f"{where}: unknown key {sec}.{key}")
        kind, setter = _BY_KEY[(sec, key)]
        value = _convert(raw, kind, f"{where}: {sec}.{key}")
        try:
            setter(cfg, value)
        except ValueError as e:
            raise ConfigError(f"{where}: {sec}.{key}: {e}") from e
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e}") from e
    return parse_config(text, source=str(p))


def _fmt(value, kind: str) -> str:
    if kind == "float":
        return repr(float(value))
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    """Effective config in the same format load_config reads; parsing the
    dump reproduces the config exactly."""
    lines = []
    current = None
    for sec, key, kind, getter, _ in _SCHEMA:
        if sec != current:
            if current is not None:
                lines.append("")
            lines.append(f"[{sec}]")
            current = sec
        lines.append(f"{key} = {_fmt(getter(cfg), kind)}")
    return "\n".join(lines) + "\n"


def _csv_header(cfg: ExperimentConfig, eval_file: bool) -> list[str]:
    cols = ["episode"]
    if eval_file:
        cols.append("eval_index")
    cols.append("overall_mbps")
    cols += [f"uav{p.id}_mbps" for p in cfg.scenario.platforms]
    cols.append("drop_rate")
    if not eval_file:
        cols.append("noise_std")
    return cols


def _result_cells(cfg: ExperimentConfig, result) -> list[str]:
    # 9 decimals keeps the per-UAV/overall accounting identity visible in the
    # rounded cells (worst-case rounding error ~3e-9 Mbps)
    cells = [f"{result.overall_mbps():.9f}"]
    cells += [f"{result.uav_mbps(p.id):.9f}" for p in cfg.scenario.platforms]
    cells.append(f"{result.drop_rate():.9f}")
    return cells


def run_single(cfg: ExperimentConfig, seed: int, quiet: bool = False) -> Path:
    """Train (or just simulate, for rr) one seed; returns the output directory.

    Writes config.ini (the effective-config echo), train.csv, eval.csv, and,
    for learning methods, final checkpoints. Rows are flushed per episode so
    an interrupted run leaves a readable prefix.
    """
    out = Path(cfg.out_dir) / f"{cfg.method}_seed{seed}"
    out.mkdir(parents=True, exist_ok=True)
    echo = ExperimentConfig(
        method=cfg.method, seeds=[seed], out_dir=cfg.out_dir, k_obs=cfg.k_obs,
        scenario=cfg.scenario, traffic=cfg.traffic, channel=cfg.channel, train=cfg.train,
    )
    (out / "config.ini").write_text(dump_config(echo))

    trainer = Trainer(cfg.env_spec(), cfg.train_config(seed))
    tc = trainer.cfg
    with open(out / "train.csv", "w", newline="") as ftrain, \
         open(out / "eval.csv", "w", newline="") as feval:
        wtrain = csv.writer(ftrain)
        weval = csv.writer(feval)
        wtrain.writerow(_csv_header(cfg, eval_file=False))
        weval.writerow(_csv_header(cfg, eval_file=True))
        for ep in range(tc.episodes):
            result, std = trainer.train_episode(ep)
            wtrain.writerow([ep] + _result_cells(cfg, result) + [f"{std:.6f}"])
            ftrain.flush()
            if (ep + 1) % tc.eval_every_episodes == 0:
                evals = trainer.evaluate()
                for j, ev in enumerate(evals):
                    weval.writerow([ep] + [j] + _result_cells(cfg, ev))
                feval.flush()
                if not quiet:
                    mean = float(np.mean([ev.overall_mbps() for ev in evals]))
                    print(
                        f"[{cfg.method} seed {seed}] episode {ep + 1}/{tc.episodes}"
                        f" eval {mean:.2f} Mbps",
                        flush=True,
                    )
    if cfg.method != "rr":
        trainer.save_checkpoints(out / "checkpoints")
    return out


def run(cfg: ExperimentConfig, parallel: bool = False, quiet: bool = False) -> int:
    """Run every seed in the config; the parallel flag fans seeds out to
    separate processes (results are identical either way)."""
    cfg.validate()
    if parallel and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=len(cfg.seeds)) as pool:
            futures = [pool.submit(run_single, cfg, s, quiet) for s in cfg.seeds]
            for f in futures:
                f.result()
    else:
        for s in cfg.seeds:
            run_single(cfg, s, quiet)
    return 0


@dataclass
class MethodSummary:
    label: str
    path: str
    mean_mbps: float
    std_mbps: float
    n_rows: int


def summarize_eval(result_dir) -> MethodSummary:
    """Converged throughput of one run: mean +/- std of the evaluation rows
    from the last 10% of training episodes."""
    d = Path(result_dir)
    eval_csv = d / "eval.csv"
    if not eval_csv.exists():
        raise ConfigError(f"{d}: no eval.csv found")
    with open(eval_csv, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ConfigError(f"{eval_csv}: no evaluation rows")
    episodes = np.array([int(r["episode"]) for r in rows])
    mbps = np.array([float(r["overall_mbps"]) for r in rows])
    cutoff = episodes.max() * 0.9
    tail = mbps[episodes > cutoff] if (episodes > cutoff).any() else mbps
    label = d.name
    cfg_echo = d / "config.ini"
    if cfg_echo.exists():
        try:
            echo = load_config(cfg_echo)
            label = f"{echo.method} seed {echo.seeds[0]}"
        except ConfigError:
            pass
    return MethodSummary(
        label=label,
        path=str(d),
        mean_mbps=float(np.mean(tail)),
        std_mbps=float(np.std(tail)),
        n_rows=int(tail.size),
    )


def compare(result_dirs) -> tuple[list[MethodSummary], dict[tuple[str, str], float]]:
    """Converged mean +/- std per run plus pairwise relative gains
    (row over column, as a fraction)."""
    if len(result_dirs) < 2:
        raise ConfigError("compare needs at least two result directories")
    summaries = [summarize_eval(d) for d in result_dirs]
    gains = {}
    for a in summaries:
        for b in summaries:
            if a is b:
                continue
            if b.mean_mbps == 0:
                raise ConfigError(f"{b.path}: zero mean throughput, gain undefined")
            gains[(a.label, b.label)] = (a.mean_mbps - b.mean_mbps) / b.mean_mbps
    return summaries, gains


def format_comparison(summaries, gains) -> str:
    lines = ["converged evaluation throughput (last 10% of episodes):"]
    width = max(len(s.label) for s in summaries)
    for s in summaries:
        lines.append(
            f"  {s.label:<{width}}  {s.mean_mbps:8.3f} +/- {s.std_mbps:.3f} Mbps"
            f"  ({s.n_rows} rows)"
        )
    lines.append("pairwise gains (row over column):")
    for (a, b), g in gains.items():
        lines.append(f"  {a} over {b}: {g * 100:+.1f}%")
    return "\n".join(lines)
