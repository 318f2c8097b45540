"""UE association, scheduling decode, round-robin baseline, backhaul capping,
and the per-slot simulation step tying channel, traffic, and actions together."""

from __future__ import annotations

import math

import numpy as np

from . import channel, traffic
from .channel import ChannelConfig
from .scenario import TETHERED_DONOR, UNTETHERED_NODE, WorldState, step_ue_mobility
from .traffic import SlotMetrics, TrafficConfig


def ue_position_matrix(world: WorldState) -> np.ndarray:
    """(n_ues, 2) positions in UE-id order."""
    return np.array([ue.position for ue in sorted(world.ues, key=lambda u: u.id)])


def _expected_rsrp_matrix(world: WorldState, chan: ChannelConfig) -> np.ndarray:
    """(n_platforms, n_ues) fading-free received power in dBm (UE gain 0 dBi)."""
    ue_xy = ue_position_matrix(world)
    out = np.empty((len(world.cfg.platforms), len(ue_xy)))
    four_pi_over_c = 4.0 * math.pi / channel.SPEED_OF_LIGHT
    for row, p in enumerate(world.cfg.platforms):
        px, py, pz = world.positions[row]
        horiz = np.hypot(ue_xy[:, 0] - px, ue_xy[:, 1] - py)
        dist = np.maximum(np.hypot(horiz, pz), 1.0)
        elev = np.degrees(np.arctan2(pz, horiz))
        p_los = 1.0 / (1.0 + chan.los_a * np.exp(-chan.los_b * (elev - chan.los_a)))
        fspl = 20.0 * np.log10(four_pi_over_c * dist * p.carrier_hz)
        pl = fspl + p_los * chan.eta_los_db + (1.0 - p_los) * chan.eta_nlos_db
        out[row] = p.tx_power_dbm + p.antenna_gain_dbi - pl
    return out


def associate(world: WorldState, chan: ChannelConfig) -> dict[int, int]:
    """Map every UE to the platform with the strongest fading-free budget.

    Ties break toward the lowest platform id (row order).
    """
    rsrp = _expected_rsrp_matrix(world, chan)
    best_row = np.argmax(rsrp, axis=0)
    platform_ids = [p.id for p in world.cfg.platforms]
    ue_ids = sorted(ue.id for ue in world.ues)
    return {ue_id: platform_ids[best_row[i]] for i, ue_id in enumerate(ue_ids)}


def observed_ues(world: WorldState, association: dict[int, int], uav_id: int, k: int) -> list[int]:
    """The k nearest associated UEs of a platform, nearest first, ties by UE id."""
    row = next(i for i, p in enumerate(world.cfg.platforms) if p.id == uav_id)
    pos = world.positions[row]
    cell = [ue for ue in world.ues if association[ue.id] == uav_id]
    cell.sort(key=lambda ue: (channel.distance3d((*ue.position, 0.0), pos), ue.id))
    return [ue.id for ue in cell[:k]]


def decode_schedule(
    actions: dict[int, np.ndarray],
    association: dict[int, int],
    world: WorldState,
    k: int,
) -> dict[int, int | None]:
    """Turn per-UAV priority vectors into one chosen UE per UAV (None = idle).

    Priority entry i refers to the i-th observed UE; entries beyond the cell
    size are ignored, and ties go to the lowest index.
    """
    choices: dict[int, int | None] = {}
    for p in world.cfg.platforms:
        observed = observed_ues(world, association, p.id, k)
        if not observed:
            choices[p.id] = None
            continue
        priorities = np.asarray(actions[p.id])[: len(observed)]
        choices[p.id] = observed[int(np.argmax(priorities))]
    return choices


def rr_schedule(
    association: dict[int, int], slot: int, uav_ids=None
) -> dict[int, int | None]:
    """Round-robin: each UAV cycles through its cell (sorted by UE id) once per slot."""
    if uav_ids is None:
        uav_ids = sorted(set(association.values()))
    cells: dict[int, list[int]] = {uav: [] for uav in uav_ids}
    for ue_id in sorted(association):
        uav = association[ue_id]
        if uav in cells:
            cells[uav].append(ue_id)
    return {
        uav: (cell[slot % len(cell)] if cell else None) for uav, cell in cells.items()
    }


def backhaul_rates(world: WorldState, chan: ChannelConfig) -> dict[int, float]:
    """Donor-to-node backhaul rate in bps per node on the dedicated carrier.

    The backhaul band is split evenly four ways; both endpoints are airborne,
    so the link is always LoS and interference-free.
    """
    donor_row = next(
        i for i, p in enumerate(world.cfg.platforms) if p.tier == TETHERED_DONOR
    )
    donor = world.cfg.platforms[donor_row]
    nodes = [
        (i, p) for i, p in enumerate(world.cfg.platforms) if p.tier == UNTETHERED_NODE
    ]
    share = chan.backhaul_bandwidth_hz / len(nodes)
    rates = {}
    for row, node in nodes:
        dist = channel.distance3d(world.positions[donor_row], world.positions[row])
        pl = channel.path_loss_db(
            chan.backhaul_carrier_hz, dist, True, chan.eta_los_db, chan.eta_nlos_db
        )
        rx = channel.rx_power_dbm(
            donor.tx_power_dbm, chan.backhaul_gain_dbi, chan.backhaul_gain_dbi, pl
        )
        snr = channel.sinr(rx, (), share, node.noise_figure_db, chan.noise_density_dbm_hz)
        rates[node.id] = channel.shannon_rate(snr, share)
    return rates


def _access_budget(
    world: WorldState,
    chan: ChannelConfig,
    uav_row: int,
    ue_pos,
    los: bool,
) -> float:
    """Received power in dBm of one platform at one UE for a drawn LoS state."""
    p = world.cfg.platforms[uav_row]
    dist = channel.distance3d(world.positions[uav_row], (*ue_pos, 0.0))
    pl = channel.path_loss_db(p.carrier_hz, dist, los, chan.eta_los_db, chan.eta_nlos_db)
    return channel.rx_power_dbm(p.tx_power_dbm, p.antenna_gain_dbi, 0.0, pl)


def step_slot(
    world: WorldState,
    choices: dict[int, int | None],
    tcfg: TrafficConfig,
    chan: ChannelConfig,
    association: dict[int, int] | None = None,
) -> tuple[WorldState, SlotMetrics]:
    """Advance the world by one slot under the given per-UAV service choices.

    Pipeline order: expire packets, draw arrivals, evaluate access SINR with
    co-channel active UAVs as interferers, cap node service by its backhaul
    share, serve the chosen queues, move the UEs, advance the slot counter.
    """
    if association is None:
        association = associate(world, chan)
    metrics = SlotMetrics(slot=world.slot)
    for p in world.cfg.platforms:
        metrics.delivered_by_uav[p.id] = 0

    for ue in world.ues:
        dropped = traffic.drop_expired(world.queues[ue.id], world.slot, tcfg.deadline_slots)
        metrics.dropped_by_ue[ue.id] = dropped
        metrics.delivered_by_ue[ue.id] = 0

    traffic.generate_arrivals(world, tcfg.lambda_pkts, tcfg.packet_bits)

    rows = {p.id: i for i, p in enumerate(world.cfg.platforms)}
    ue_by_id = {ue.id: ue for ue in world.ues}
    active = [p for p in world.cfg.platforms if choices.get(p.id) is not None]
    bh_rates = backhaul_rates(world, chan)

    # LoS draws happen per (link, slot) in platform-id order for determinism.
    for p in sorted(active, key=lambda p: p.id):
        ue_id = choices[p.id]
        if association[ue_id] != p.id:
            raise ValueError(f"UAV {p.id} chose UE {ue_id} outside its cell")
        ue = ue_by_id[ue_id]
        elev = channel.elevation_deg((*ue.position, 0.0), world.positions[rows[p.id]])
        serving_los = world.rng.random() < channel.los_probability(elev, chan.los_a, chan.los_b)
        serving_dbm = _access_budget(world, chan, rows[p.id], ue.position, serving_los)

        interferers = []
        for q in sorted(active, key=lambda q: q.id):
            if q.id == p.id or q.carrier_hz != p.carrier_hz:
                continue
            i_elev = channel.elevation_deg((*ue.position, 0.0), world.positions[rows[q.id]])
            i_los = world.rng.random() < channel.los_probability(i_elev, chan.los_a, chan.los_b)
            interferers.append(_access_budget(world, chan, rows[q.id], ue.position, i_los))

        ratio = channel.sinr(
            serving_dbm, interferers, p.bandwidth_hz, chan.ue_noise_figure_db,
            chan.noise_density_dbm_hz,
        )
        rate = channel.shannon_rate(ratio, p.bandwidth_hz)
        capacity = int(rate * world.cfg.slot_seconds)
        if p.tier == UNTETHERED_NODE:
            capacity = min(capacity, int(bh_rates[p.id] * world.cfg.slot_seconds))
        delivered = traffic.serve_bits(world.queues[ue_id], capacity)
        metrics.delivered_by_uav[p.id] = delivered
        metrics.delivered_by_ue[ue_id] += delivered

    step_ue_mobility(world, world.cfg.slot_seconds)
    world.slot += 1
    return world, metrics
