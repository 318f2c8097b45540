"""World geometry: UAV fleet, mobile ground users, and their motion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .traffic import PacketQueue

TETHERED_DONOR = "tethered_donor"
UNTETHERED_NODE = "untethered_node"


@dataclass
class PlatformSpec:
    """Radio and mobility capabilities of one UAV base station."""

    id: int
    tier: str
    altitude_m: float
    carrier_hz: float
    bandwidth_hz: float
    tx_power_dbm: float
    antenna_gain_dbi: float = 3.0
    noise_figure_db: float = 7.0
    max_speed_mps: float = 0.0

    def validate(self):
        if self.altitude_m <= 0:
            raise ValueError(f"platform {self.id}: altitude must be positive")
        if self.bandwidth_hz <= 0:
            raise ValueError(f"platform {self.id}: bandwidth must be positive")
        if self.tier == TETHERED_DONOR and self.max_speed_mps != 0:
            raise ValueError(f"platform {self.id}: a tethered donor cannot move")
        if self.tier not in (TETHERED_DONOR, UNTETHERED_NODE):
            raise ValueError(f"platform {self.id}: unknown tier {self.tier!r}")


def default_fleet(
    donor_altitude_m=200.0,
    node_altitude_m=100.0,
    donor_carrier_hz=2.0e9,
    donor_bandwidth_hz=40e6,
    node_carrier_hz=2.5e9,
    node_bandwidth_hz=20e6,
    donor_tx_power_dbm=-13.0,
    node_tx_power_dbm=-13.0,
    antenna_gain_dbi=3.0,
    noise_figure_db=7.0,
    node_max_speed_mps=40.0,
) -> list[PlatformSpec]:
    """One tethered donor (id 0) plus four untethered nodes (ids 1..4).

    Default transmit powers are deliberately low: they put every access link
    in the noise-limited regime where per-UE rates spread by more than an
    order of magnitude across a cell, so which UE a policy schedules (and
    where a node flies) dominates delivered throughput.  Raising them toward
    realistic base-station EIRPs makes the system capacity-rich and erases
    most of the gap between scheduling policies.
    """
    donor = PlatformSpec(
        id=0,
        tier=TETHERED_DONOR,
        altitude_m=donor_altitude_m,
        carrier_hz=donor_carrier_hz,
        bandwidth_hz=donor_bandwidth_hz,
        tx_power_dbm=donor_tx_power_dbm,
        antenna_gain_dbi=antenna_gain_dbi,
        noise_figure_db=noise_figure_db,
        max_speed_mps=0.0,
    )
    nodes = [
        PlatformSpec(
            id=i + 1,
            tier=UNTETHERED_NODE,
            altitude_m=node_altitude_m,
            carrier_hz=node_carrier_hz,
            bandwidth_hz=node_bandwidth_hz,
            tx_power_dbm=node_tx_power_dbm,
            antenna_gain_dbi=antenna_gain_dbi,
            noise_figure_db=noise_figure_db,
            max_speed_mps=node_max_speed_mps,
        )
        for i in range(4)
    ]
    return [donor] + nodes


@dataclass
class ScenarioConfig:
    area_w_m: float = 1400.0
    area_h_m: float = 1400.0
    # Dense enough that the demand field is smooth across random layouts:
    # per-world throughput spread halves going from 28 to 56 UEs, which is
    # what lets value gradients stand out against layout luck.
    n_ues: int = 56
    ue_speed_min_mps: float = 1.0
    ue_speed_max_mps: float = 3.0
    slot_seconds: float = 0.030
    platforms: list[PlatformSpec] = field(default_factory=default_fleet)

    @property
    def donor(self) -> PlatformSpec:
        return next(p for p in self.platforms if p.tier == TETHERED_DONOR)

    @property
    def nodes(self) -> list[PlatformSpec]:
        return [p for p in self.platforms if p.tier == UNTETHERED_NODE]

    def validate(self):
        if self.area_w_m <= 0 or self.area_h_m <= 0:
            raise ValueError("service area dimensions must be positive")
        if self.n_ues < 1:
            raise ValueError("at least one ground user is required")
        if not (0 < self.ue_speed_min_mps <= self.ue_speed_max_mps):
            raise ValueError("ground-user speed range must satisfy 0 < min <= max")
        if self.slot_seconds <= 0:
            raise ValueError("slot duration must be positive")
        n_donor = sum(p.tier == TETHERED_DONOR for p in self.platforms)
        n_node = sum(p.tier == UNTETHERED_NODE for p in self.platforms)
        if n_donor != 1 or n_node != 4:
            raise ValueError(
                f"fleet must be 1 donor + 4 nodes, got {n_donor} + {n_node}"
            )
        for p in self.platforms:
            p.validate()


@dataclass
class UeState:
    """A mobile ground user moving waypoint-to-waypoint at fixed height 0."""

    id: int
    position: np.ndarray  # (2,) meters
    waypoint: np.ndarray  # (2,) meters
    speed: float  # m/s toward the waypoint

    @property
    def velocity(self) -> np.ndarray:
        delta = self.waypoint - self.position
        dist = float(np.hypot(delta[0], delta[1]))
        if dist == 0.0:
            return np.zeros(2)
        return delta * (self.speed / dist)


@dataclass
class WorldState:
    """Full simulation snapshot; one instance per rollout, never shared."""

    cfg: ScenarioConfig
    slot: int
    positions: np.ndarray  # (n_platforms, 3), row order = cfg.platforms order
    ues: list[UeState]
    queues: dict[int, PacketQueue]
    rng: np.random.Generator


def _uniform_point(rng: np.random.Generator, cfg: ScenarioConfig) -> np.ndarray:
    return np.array([rng.uniform(0.0, cfg.area_w_m), rng.uniform(0.0, cfg.area_h_m)])


def init_world(cfg: ScenarioConfig, seed: int) -> WorldState:
    """Build the initial world: donor at the area center, nodes at quadrant
    centers, ground users placed uniformly at random.

    Identical (cfg, seed) pairs produce bit-identical worlds.
    """
    cfg.validate()
    w, h = cfg.area_w_m, cfg.area_h_m
    quadrants = [
        (w / 4, h / 4),
        (3 * w / 4, h / 4),
        (w / 4, 3 * h / 4),
        (3 * w / 4, 3 * h / 4),
    ]
    positions = np.zeros((len(cfg.platforms), 3))
    node_i = 0
    for row, p in enumerate(cfg.platforms):
        if p.tier == TETHERED_DONOR:
            positions[row] = (w / 2, h / 2, p.altitude_m)
        else:
            qx, qy = quadrants[node_i]
            positions[row] = (qx, qy, p.altitude_m)
            node_i += 1

    rng = np.random.default_rng(seed)
    ues = []
    for ue_id in range(cfg.n_ues):
        pos = _uniform_point(rng, cfg)
        wp = _uniform_point(rng, cfg)
        speed = rng.uniform(cfg.ue_speed_min_mps, cfg.ue_speed_max_mps)
        ues.append(UeState(id=ue_id, position=pos, waypoint=wp, speed=speed))

    queues = {ue.id: PacketQueue() for ue in ues}
    return WorldState(cfg=cfg, slot=0, positions=positions, ues=ues, queues=queues, rng=rng)


def step_ue_mobility(world: WorldState, dt: float) -> WorldState:
    """Advance every UE toward its waypoint; redraw waypoint and speed on arrival."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    cfg = world.cfg
    for ue in world.ues:
        delta = ue.waypoint - ue.position
        dist = float(np.hypot(delta[0], delta[1]))
        travel = ue.speed * dt
        if dist <= travel:
            ue.position = ue.waypoint.copy()
            ue.waypoint = _uniform_point(world.rng, cfg)
            ue.speed = float(world.rng.uniform(cfg.ue_speed_min_mps, cfg.ue_speed_max_mps))
        else:
            ue.position = ue.position + delta * (travel / dist)
        np.clip(ue.position, (0.0, 0.0), (cfg.area_w_m, cfg.area_h_m), out=ue.position)
    return world


def apply_trajectory(world: WorldState, commands, dt: float) -> WorldState:
    """Move each untethered node by its commanded velocity for dt seconds.

    Commands above a node's speed cap are renormalized to the cap; positions
    are clamped to the service area; altitudes and the donor never change.
    """
    nodes = [(row, p) for row, p in enumerate(world.cfg.platforms) if p.tier == UNTETHERED_NODE]
    commands = np.asarray(commands, dtype=float)
    if commands.shape != (len(nodes), 2):
        raise ValueError(f"expected {len(nodes)} velocity commands, got shape {commands.shape}")
    for (row, p), v in zip(nodes, commands):
        speed = float(np.hypot(v[0], v[1]))
        if speed > p.max_speed_mps and speed > 0:
            v = v * (p.max_speed_mps / speed)
        world.positions[row, 0] = min(max(world.positions[row, 0] + v[0] * dt, 0.0), world.cfg.area_w_m)
        world.positions[row, 1] = min(max(world.positions[row, 1] + v[1] * dt, 0.0), world.cfg.area_h_m)
    return world
