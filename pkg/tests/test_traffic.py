"""Poisson arrivals, deadline drops, FIFO fluid service, conservation."""

import numpy as np
import pytest

from ntnsim import traffic
from ntnsim.scenario import ScenarioConfig, init_world
from ntnsim.traffic import Packet, PacketQueue, TrafficConfig


def make_packet(arrival_slot, bits=100_000, ue_id=0):
    return Packet(ue_id=ue_id, size_bits=bits, arrival_slot=arrival_slot, remaining_bits=bits)


def test_sample_poisson_edge_cases():
    rng = np.random.default_rng(0)
    assert traffic.sample_poisson(rng, 0.0) == 0
    with pytest.raises(ValueError):
        traffic.sample_poisson(rng, -1.0)


def test_sample_poisson_moments():
    rng = np.random.default_rng(42)
    draws = np.array([traffic.sample_poisson(rng, 4.0) for _ in range(100_000)])
    assert abs(draws.mean() - 4.0) < 0.03
    assert abs(draws.var() - 4.0) < 0.15


def test_generate_arrivals_counts_and_determinism():
    cfg = ScenarioConfig(n_ues=20)
    world = init_world(cfg, seed=1)
    for slot in range(200):
        world.slot = slot
        traffic.generate_arrivals(world, lam=4.0, packet_bits=50_000)
    total_packets = sum(len(q.packets) for q in world.queues.values())
    mean, sigma = 20 * 4.0 * 200, (20 * 4.0 * 200) ** 0.5
    assert abs(total_packets - mean) < 3 * sigma
    for q in world.queues.values():
        assert q.arrived_bits == sum(p.size_bits for p in q.packets)

    again = init_world(cfg, seed=1)
    for slot in range(200):
        again.slot = slot
        traffic.generate_arrivals(again, lam=4.0, packet_bits=50_000)
    assert [len(q.packets) for q in world.queues.values()] == [
        len(q.packets) for q in again.queues.values()
    ]


def test_generate_arrivals_lambda_zero():
    world = init_world(ScenarioConfig(n_ues=5), seed=0)
    traffic.generate_arrivals(world, lam=0.0, packet_bits=50_000)
    assert all(not q.packets for q in world.queues.values())


def test_hol_age():
    q = PacketQueue()
    assert q.hol_age(12) == 0
    q.push(make_packet(arrival_slot=5))
    assert q.hol_age(12) == 7


def test_drop_expired_boundary():
    q = PacketQueue()
    q.push(make_packet(arrival_slot=5))
    assert traffic.drop_expired(q, current_slot=14, deadline_slots=10) == 0
    assert len(q.packets) == 1
    assert traffic.drop_expired(q, current_slot=15, deadline_slots=10) == 100_000
    assert not q.packets
    assert q.dropped_bits == 100_000
    assert traffic.drop_expired(q, current_slot=16) == 0


def test_drop_expired_partial_residual():
    q = PacketQueue()
    q.push(make_packet(arrival_slot=0))
    traffic.serve_bits(q, 40_000)
    dropped = traffic.drop_expired(q, current_slot=10, deadline_slots=10)
    assert dropped == 60_000  # only the residual counts as dropped


def test_serve_bits_examples():
    q = PacketQueue()
    q.push(make_packet(0, bits=100_000))
    assert traffic.serve_bits(q, 250_000) == 100_000
    assert not q.packets

    q = PacketQueue()
    for _ in range(3):
        q.push(make_packet(0, bits=100_000))
    assert traffic.serve_bits(q, 250_000) == 250_000
    assert len(q.packets) == 1
    assert q.packets[0].remaining_bits == 50_000

    before = q.queued_bits()
    assert traffic.serve_bits(q, 0) == 0
    assert q.queued_bits() == before
    with pytest.raises(ValueError):
        traffic.serve_bits(q, -1)


def test_serve_bits_is_fifo():
    q = PacketQueue()
    q.push(make_packet(0, bits=10_000))
    q.push(make_packet(1, bits=10_000))
    traffic.serve_bits(q, 15_000)
    assert len(q.packets) == 1
    assert q.packets[0].arrival_slot == 1
    assert q.packets[0].remaining_bits == 5_000


def test_conservation_under_random_operations():
    rng = np.random.default_rng(9)
    q = PacketQueue()
    slot = 0
    for _ in range(5_000):
        op = rng.integers(0, 3)
        if op == 0:
            q.push(make_packet(slot, bits=int(rng.integers(1, 200_000))))
        elif op == 1:
            traffic.serve_bits(q, int(rng.integers(0, 300_000)))
        else:
            slot += int(rng.integers(0, 4))
            traffic.drop_expired(q, slot, deadline_slots=10)
        assert q.arrived_bits == q.delivered_bits + q.dropped_bits + q.queued_bits()


def test_slot_metrics_total():
    m = traffic.SlotMetrics(slot=3)
    m.delivered_by_uav = {0: 100, 1: 200, 2: 0}
    assert m.delivered_bits == 300


def test_traffic_config_defaults():
    cfg = TrafficConfig()
    assert cfg.lambda_pkts == 2.0
    assert cfg.deadline_slots == 10
