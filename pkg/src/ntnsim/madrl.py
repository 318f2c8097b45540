"""Two-timescale multi-agent actor-critic stack.

Two agent groups share one team reward: every platform carries a scheduling
agent that picks a user each slot, and every untethered node additionally
carries a trajectory agent that emits a velocity held for five slots.
Critics are trained on the global state plus all same-group actions;
actors act on local observations only, so execution never needs the
global state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mac, nn
from .channel import ChannelConfig
from .nn import MlpParams
from .scenario import (
    UNTETHERED_NODE,
    ScenarioConfig,
    WorldState,
    apply_trajectory,
    init_world,
)
from .traffic import SlotMetrics, TrafficConfig

K_OBS = 8  # fixed observation slots per agent; smaller cells are zero-padded
TRAJECTORY_PERIOD = 5  # slots per trajectory decision
REWARD_SCALE = 1e9  # slot reward = delivered bits per second / this


@dataclass
class AgentSpec:
    name: str
    group: str  # "scheduler" | "trajectory"
    platform_id: int
    decision_period_slots: int
    obs_dim: int
    action_dim: int


@dataclass
class ObsNorm:
    """Scales that map raw queue quantities into [0, 1] observation entries."""

    backlog_bits: float
    age_slots: float

    @classmethod
    def from_traffic(cls, tcfg: TrafficConfig) -> "ObsNorm":
        # one deadline's worth of mean load saturates the backlog entry
        return cls(
            backlog_bits=max(tcfg.lambda_pkts * tcfg.packet_bits * tcfg.deadline_slots, 1.0),
            age_slots=float(max(tcfg.deadline_slots, 1)),
        )


@dataclass
class EnvSpec:
    """Everything a rollout needs besides policies."""

    scenario: ScenarioConfig
    traffic: TrafficConfig
    channel: ChannelConfig
    k_obs: int = K_OBS

    def norm(self) -> ObsNorm:
        return ObsNorm.from_traffic(self.traffic)


def build_agent_specs(env: EnvSpec) -> tuple[list[AgentSpec], list[AgentSpec]]:
    k = env.k_obs
    sched = [
        AgentSpec(f"sched{p.id}", "scheduler", p.id, 1, 2 + 4 * k, k)
        for p in env.scenario.platforms
    ]
    traj = [
        AgentSpec(f"traj{p.id}", "trajectory", p.id, TRAJECTORY_PERIOD, 4 + 4 * k, 2)
        for p in env.scenario.platforms
        if p.tier == UNTETHERED_NODE
    ]
    return sched, traj


def local_observation(
    agent: AgentSpec,
    world: WorldState,
    association: dict[int, int],
    norm: ObsNorm,
    k_obs: int = K_OBS,
) -> np.ndarray:
    """Own normalized position, then per observed UE (nearest first) its
    relative position, backlog, and head-of-line age; trajectory agents also
    see the donor's relative position. Every entry lands in [-1, 1]."""
    w, h = world.cfg.area_w_m, world.cfg.area_h_m
    row = next(i for i, p in enumerate(world.cfg.platforms) if p.id == agent.platform_id)
    px, py = world.positions[row, 0], world.positions[row, 1]
    out = np.zeros(agent.obs_dim)
    out[0] = px / w
    out[1] = py / h
    ue_by_id = {ue.id: ue for ue in world.ues}
    for i, ue_id in enumerate(mac.observed_ues(world, association, agent.platform_id, k_obs)):
        ue = ue_by_id[ue_id]
        q = world.queues[ue_id]
        base = 2 + 4 * i
        out[base] = (ue.position[0] - px) / w
        out[base + 1] = (ue.position[1] - py) / h
        out[base + 2] = min(q.queued_bits() / norm.backlog_bits, 1.0)
        out[base + 3] = min(q.hol_age(world.slot) / norm.age_slots, 1.0)
    if agent.group == "trajectory":
        donor_row = 0
        for j, p in enumerate(world.cfg.platforms):
            if p.tier != UNTETHERED_NODE:
                donor_row = j
                break
        out[-2] = (world.positions[donor_row, 0] - px) / w
        out[-1] = (world.positions[donor_row, 1] - py) / h
    return out


def global_state(world: WorldState, norm: ObsNorm) -> np.ndarray:
    """All platform positions, all UE positions (id order), all backlogs and
    head-of-line ages, each normalized. Used by critics only."""
    w, h = world.cfg.area_w_m, world.cfg.area_h_m
    parts = [world.positions[:, 0] / w, world.positions[:, 1] / h]
    ues = sorted(world.ues, key=lambda u: u.id)
    parts.append(np.array([ue.position[0] / w for ue in ues]))
    parts.append(np.array([ue.position[1] / h for ue in ues]))
    parts.append(
        np.array([min(world.queues[ue.id].queued_bits() / norm.backlog_bits, 1.0) for ue in ues])
    )
    parts.append(
        np.array([min(world.queues[ue.id].hol_age(world.slot) / norm.age_slots, 1.0) for ue in ues])
    )
    return np.concatenate(parts)


def global_state_dim(n_platforms: int, n_ues: int) -> int:
    return 2 * n_platforms + 4 * n_ues


def select_action(
    actor: MlpParams, obs: np.ndarray, noise_std: float, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Deterministic actor output plus clipped Gaussian exploration noise."""
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    a = nn.mlp_forward(actor, obs)
    if noise_std > 0.0:
        a = a + rng.normal(0.0, noise_std, size=a.shape)
    return np.clip(a, -1.0, 1.0)


def noise_schedule(
    episode: int,
    total_episodes: int,
    start: float = 0.3,
    end: float = 0.05,
    decay_frac: float = 0.6,
) -> float:
    """Linear decay from start to end over the first decay_frac of training."""
    horizon = max(int(total_episodes * decay_frac), 1)
    if episode >= horizon:
        return end
    return start + (end - start) * (episode / horizon)


def team_reward(metrics: SlotMetrics, slot_seconds: float, scale: float = REWARD_SCALE) -> float:
    return metrics.delivered_bits / slot_seconds / scale


class ReplayBuffer:
    """Fixed-capacity ring of team transitions, uniformly sampled."""

    def __init__(self, capacity: int, state_dim: int, n_agents: int, obs_dim: int, act_dim: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.size = 0
        self._head = 0
        self.state = np.zeros((capacity, state_dim), dtype=np.float32)
        self.obs = np.zeros((capacity, n_agents, obs_dim), dtype=np.float32)
        self.actions = np.zeros((capacity, n_agents, act_dim), dtype=np.float32)
        self.reward = np.zeros(capacity, dtype=np.float32)
        self.next_state = np.zeros((capacity, state_dim), dtype=np.float32)
        self.next_obs = np.zeros((capacity, n_agents, obs_dim), dtype=np.float32)
        self.done = np.zeros(capacity, dtype=np.float32)

    def __len__(self) -> int:
        return self.size

    def push(self, state, obs, actions, reward, next_state, next_obs, done: bool):
        i = self._head
        self.state[i] = state
        self.obs[i] = obs
        self.actions[i] = actions
        self.reward[i] = reward
        self.next_state[i] = next_state
        self.next_obs[i] = next_obs
        self.done[i] = 1.0 if done else 0.0
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int) -> dict:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} < batch size {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return {
            "state": self.state[idx].astype(float),
            "obs": self.obs[idx].astype(float),
            "actions": self.actions[idx].astype(float),
            "reward": self.reward[idx].astype(float),
            "next_state": self.next_state[idx].astype(float),
            "next_obs": self.next_obs[idx].astype(float),
            "done": self.done[idx].astype(float),
        }


def target_actions(actors: list[MlpParams], next_obs: np.ndarray) -> np.ndarray:
    """(batch, n_agents, act_dim) actions of the target actors on next observations."""
    return np.stack(
        [nn.mlp_forward(a, next_obs[:, i, :]) for i, a in enumerate(actors)], axis=1
    )


def critic_targets(
    batch: dict,
    target_actors: list[MlpParams],
    target_critic: MlpParams,
    gamma: float,
    next_actions: np.ndarray | None = None,
) -> np.ndarray:
    """y = r + gamma * (1 - done) * Q_target(next_state, target-actor actions)."""
    if next_actions is None:
        next_actions = target_actions(target_actors, batch["next_obs"])
    b = next_actions.shape[0]
    x = np.concatenate([batch["next_state"], next_actions.reshape(b, -1)], axis=1)
    q = nn.mlp_forward(target_critic, x)[:, 0]
    return batch["reward"] + gamma * (1.0 - batch["done"]) * q


def update_critic(
    critic: MlpParams,
    adam: nn.AdamState,
    batch: dict,
    targets: np.ndarray,
    lr: float = 1e-3,
    weight_decay: float = 0.0,
) -> float:
    """One Adam step on the mean squared TD error (plus L2 on the weights);
    returns the TD loss.

    The decay matters for the high-dimensional critics: with a few thousand
    buffered transitions and a hundred-plus state dims, an unregularized net
    soaks up chance state-reward correlations, and its action gradient (which
    steers the actors) inherits them."""
    b = batch["state"].shape[0]
    x = np.concatenate([batch["state"], batch["actions"].reshape(b, -1)], axis=1)
    q = nn.mlp_forward(critic, x)[:, 0]
    err = q - targets
    upstream = (2.0 * err / b)[:, None]
    gw, gb, _ = nn.mlp_backward(critic, x, upstream)
    if weight_decay > 0.0:
        for g, w in zip(gw, critic.weights):
            g += 2.0 * weight_decay * w
    nn.adam_step(critic, gw, gb, adam, lr)
    return float(np.mean(err * err))


def update_actor(
    agent_index: int,
    actor: MlpParams,
    adam: nn.AdamState,
    critic: MlpParams,
    batch: dict,
    lr: float = 1e-4,
    action_reg: float = 1e-3,
) -> None:
    """One Adam ascent step on mean Q with this agent's action replayed
    through its actor; the gradient reaches the actor via the critic's
    input gradient on the action columns.

    action_reg penalizes mean squared action magnitude, which keeps tanh
    outputs off the rails where their gradient vanishes and the actor can
    never recover."""
    b, n_agents, act_dim = batch["actions"].shape
    obs_i = batch["obs"][:, agent_index, :]
    a_i = nn.mlp_forward(actor, obs_i)
    actions = batch["actions"].copy()
    actions[:, agent_index, :] = a_i
    x = np.concatenate([batch["state"], actions.reshape(b, -1)], axis=1)
    upstream = np.full((b, 1), -1.0 / b)  # minimize -mean(Q)
    _, _, gx = nn.mlp_backward(critic, x, upstream)
    state_dim = batch["state"].shape[1]
    start = state_dim + agent_index * act_dim
    da_i = gx[:, start : start + act_dim] + (2.0 * action_reg / b) * a_i
    gw, gb, _ = nn.mlp_backward(actor, obs_i, da_i)
    nn.adam_step(actor, gw, gb, adam, lr)


@dataclass
class EpisodeResult:
    slots: int
    slot_seconds: float
    delivered_bits: int = 0
    arrived_bits: int = 0
    dropped_bits: int = 0
    delivered_by_uav: dict = field(default_factory=dict)
    slot_rewards: list = field(default_factory=list)
    macro_rewards: list = field(default_factory=list)
    n_sched_transitions: int = 0
    n_traj_transitions: int = 0
    sched_action_log: list = field(default_factory=list)
    traj_action_log: list = field(default_factory=list)

    def overall_mbps(self) -> float:
        return self.delivered_bits / (self.slots * self.slot_seconds) / 1e6

    def uav_mbps(self, uav_id: int) -> float:
        return self.delivered_by_uav.get(uav_id, 0) / (self.slots * self.slot_seconds) / 1e6

    def drop_rate(self) -> float:
        return self.dropped_bits / self.arrived_bits if self.arrived_bits else 0.0


def run_episode(
    env: EnvSpec,
    method: str,
    sched_actors: list[MlpParams] | None,
    traj_actors: list[MlpParams] | None,
    world_seed,
    slots: int,
    mode: str = "eval",
    noise_std: float = 0.0,
    traj_drift_std: float = 0.0,
    traj_explore_only: bool = False,
    noise_rng: np.random.Generator | None = None,
    sched_buffer: ReplayBuffer | None = None,
    traj_buffer: ReplayBuffer | None = None,
    zero_global: bool = False,
    record_actions: bool = False,
) -> EpisodeResult:
    """One rollout. Scheduling agents act every slot; trajectory agents emit
    a velocity at slots that are multiples of 5, held until the next command.

    In train mode, exploration noise is drawn from noise_rng and transitions
    are pushed into the group buffers: one per slot for the scheduler group,
    one per 5-slot macro-step (with summed reward) for the trajectory group.
    Velocity exploration adds an episode-constant drift vector on top of the
    per-step Gaussian: white noise at the macro-step scale cancels itself and
    displaces a node only a few meters per episode, so sustained-movement
    payoffs would never appear in the replay data. With traj_explore_only the
    velocity commands are the drift alone (actors ignored for this episode),
    which keeps near-hover contrast data in the buffer after the policy has
    committed to a direction. Eval mode stores nothing. Action selection reads
    only local observations; the global state is computed for critic-side
    bookkeeping alone, and zero_global replaces it with zeros without touching
    behavior.
    """
    if method not in ("rr", "maddpg", "tts-maddpg"):
        raise ValueError(f"unknown method {method!r}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    train = mode == "train"
    learn = method != "rr"
    sched_specs, traj_specs = build_agent_specs(env)
    norm = env.norm()
    world = init_world(env.scenario, world_seed)
    dt = env.scenario.slot_seconds
    node_caps = np.array(
        [p.max_speed_mps for p in env.scenario.platforms if p.tier == UNTETHERED_NODE]
    )
    uav_ids = [p.id for p in env.scenario.platforms]

    res = EpisodeResult(slots=slots, slot_seconds=dt)
    res.delivered_by_uav = {pid: 0 for pid in uav_ids}
    held_velocity = np.zeros((len(traj_specs), 2))
    # One exploration bearing per episode, held for the whole episode so the
    # node's displacement accumulates along it. The episode-level correlation
    # between the bearing and the rewards it earns is the channel the value
    # fit actually reads; a sign-alternating bearing was tried and nulls it.
    traj_drift = np.zeros((len(traj_specs), 2))
    if train and traj_specs and traj_drift_std > 0.0:
        traj_drift = noise_rng.normal(0.0, traj_drift_std, (len(traj_specs), 2))
    pending_sched = None  # (state, obs, actions, reward) awaiting next state
    pending_traj = None  # (state, obs, actions) for the running macro-step
    macro_sum = 0.0

    def snapshot(association):
        state = np.zeros(global_state_dim(len(uav_ids), env.scenario.n_ues)) if zero_global \
            else global_state(world, norm)
        obs = None
        if learn:
            obs = np.stack(
                [local_observation(s, world, association, norm, env.k_obs) for s in sched_specs]
            )
        return state, obs

    for t in range(slots):
        association = mac.associate(world, env.channel)
        state, sched_obs = snapshot(association)

        if pending_sched is not None:
            sched_buffer.push(*pending_sched, state, sched_obs, False)
            res.n_sched_transitions += 1

        if method == "tts-maddpg" and t % TRAJECTORY_PERIOD == 0:
            traj_obs = np.stack(
                [local_observation(s, world, association, norm, env.k_obs) for s in traj_specs]
            )
            if pending_traj is not None:
                if train:
                    traj_buffer.push(*pending_traj, macro_sum, state, traj_obs, False)
                    res.n_traj_transitions += 1
                res.macro_rewards.append(macro_sum)
            macro_sum = 0.0
            if train and traj_explore_only:
                traj_acts = np.zeros((len(traj_specs), 2))
            else:
                traj_acts = np.stack(
                    [
                        select_action(traj_actors[i], traj_obs[i], noise_std if train else 0.0, noise_rng)
                        for i in range(len(traj_specs))
                    ]
                )
            if train:
                traj_acts = np.clip(traj_acts + traj_drift, -1.0, 1.0)
            held_velocity = traj_acts * node_caps[:, None]
            pending_traj = (state, traj_obs, traj_acts)
            if record_actions:
                res.traj_action_log.append(traj_acts.copy())

        if learn:
            sched_acts = np.stack(
                [
                    select_action(sched_actors[i], sched_obs[i], noise_std if train else 0.0, noise_rng)
                    for i in range(len(sched_specs))
                ]
            )
            choices = mac.decode_schedule(
                {s.platform_id: sched_acts[i] for i, s in enumerate(sched_specs)},
                association,
                world,
                env.k_obs,
            )
            if record_actions:
                res.sched_action_log.append(sched_acts.copy())
        else:
            sched_acts = None
            choices = mac.rr_schedule(association, t, uav_ids)

        world, metrics = mac.step_slot(world, choices, env.traffic, env.channel, association)
        if method == "tts-maddpg":
            apply_trajectory(world, held_velocity, dt)

        r = team_reward(metrics, dt)
        macro_sum += r
        res.slot_rewards.append(r)
        for pid, bits in metrics.delivered_by_uav.items():
            res.delivered_by_uav[pid] += bits

        pending_sched = (state, sched_obs, sched_acts, r) if (train and learn) else None

    if pending_sched is not None or pending_traj is not None:
        association = mac.associate(world, env.channel)
        state, sched_obs = snapshot(association)
        if pending_sched is not None:
            sched_buffer.push(*pending_sched, state, sched_obs, True)
            res.n_sched_transitions += 1
        if pending_traj is not None:
            traj_obs = np.stack(
                [local_observation(s, world, association, norm, env.k_obs) for s in traj_specs]
            )
            if train:
                traj_buffer.push(*pending_traj, macro_sum, state, traj_obs, True)
                res.n_traj_transitions += 1
            res.macro_rewards.append(macro_sum)

    res.delivered_bits = sum(res.delivered_by_uav.values())
    res.arrived_bits = sum(q.arrived_bits for q in world.queues.values())
    res.dropped_bits = sum(q.dropped_bits for q in world.queues.values())
    return res


@dataclass
class TrainConfig:
    method: str = "tts-maddpg"  # rr | maddpg | tts-maddpg
    episodes: int = 1000
    slots_per_episode: int = 200
    seed: int = 0
    gamma: float = 0.95
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 128
    hidden_width: int = 64
    # Wider nets for the velocity group only: its critics regress position
    # value against the full cross-agent state, a few hundred dims at the
    # default scenario, from a replay ring two orders of magnitude smaller
    # than the schedulers'. The scheduler group keeps the narrow width; its
    # per-slot reward makes the fit easy and its nets dominate runtime.
    traj_hidden_width: int = 128
    sched_buffer_capacity: int = 200_000
    # Kept small on purpose: the ring then holds only the most recent ~120
    # episodes, so the velocity critics regress against the current scheduler
    # rather than the stale low-reward transitions from early training.
    traj_buffer_capacity: int = 2_400
    warmup_transitions: int = 5_000
    slots_per_update: int = 4
    noise_start: float = 0.3
    noise_end: float = 0.05
    noise_decay_frac: float = 0.6
    # Episode-constant velocity drift std, held fixed across training (unlike
    # the per-step Gaussian): critics only see position-vs-throughput evidence
    # if exploration displaces nodes across the cell, and a decaying drift
    # would correlate position spread with training epoch, letting the
    # concurrent scheduler improvement masquerade as a movement penalty.
    traj_drift_std: float = 1.0
    # Once the velocity actors are stepping, the drift decays linearly to
    # this floor by the final episode: full-scale drift is only needed while
    # the critics map the position field, and keeping it up afterwards makes
    # the schedulers train on geometry they will never see at eval time.
    traj_drift_floor: float = 0.25
    # Update rounds before velocity actors start stepping: their critics must
    # first map the position field, or the actors chase gradient noise into
    # the tanh rails and never recover.
    traj_actor_delay: int = 3500
    # Rounds the velocity actors then step before being held again (0 keeps
    # them stepping to the end). The useful value slope is climbed within a
    # few hundred rounds; at a saturated tanh the climbed direction has no
    # actor gradient left while any orthogonal critic noise still does, so an
    # open-ended stepping phase lets the policy slowly rotate off the learned
    # direction. Bounding the phase ends training in the settled geometry.
    traj_actor_window: int = 750
    # Every n-th training episode after the velocity unlock flies on drift
    # alone (velocity actors ignored). Once the policy commits to a direction,
    # on-policy data stops covering the near-hover region; without standing
    # contrast episodes the critics forget the value slope that justified the
    # direction and the actors wander off it. Before the unlock every
    # training episode flies drift alone already, so anchors start there.
    traj_anchor_every: int = 3
    # L2 pull toward hover on the velocity actions. The actor rails a
    # dimension when its critic gradient beats 2*reg*|a|, and measured
    # gradients for wrong directions sit at the same scale as weak true
    # ones, so no L2 value can arbitrate direction; that job belongs to the
    # drift anchors. This is kept an order of magnitude below the measured
    # slopes so any direction the critic does hold saturates the command,
    # and it only bounds the command where the critic is flat.
    action_reg: float = 1e-3
    # L2 on the velocity critics only: they regress a hundred-plus state dims
    # against a few thousand recent transitions, and unregularized they soak
    # up chance state-reward correlations that then steer the actors. The
    # scheduler critics see an order of magnitude more data and need none.
    traj_critic_weight_decay: float = 1e-4
    # Total update rounds for the run (0 = unlimited); rollouts and evals
    # continue after the budget so the logs keep their cadence. Once every
    # agent has converged, further rounds only give the weakest critic's
    # noise time to walk some actor onto a saturated rail it cannot leave
    # (observed as one scheduler agent's throughput halving dozens of
    # episodes after the whole system had plateaued). The default ends
    # optimization a comfortable margin after the velocity window closes.
    update_rounds_budget: int = 4_600
    eval_every_episodes: int = 25
    eval_episodes: int = 20

    def validate(self) -> None:
        if self.method not in ("rr", "maddpg", "tts-maddpg"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.episodes <= 0 or self.slots_per_episode <= 0:
            raise ValueError("episodes and slots_per_episode must be positive")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.batch_size <= 0 or self.slots_per_update <= 0:
            raise ValueError("batch_size and slots_per_update must be positive")
        if self.hidden_width <= 0 or self.traj_hidden_width <= 0:
            raise ValueError("hidden widths must be positive")
        if self.traj_drift_std < 0.0 or self.traj_actor_delay < 0:
            raise ValueError("traj_drift_std and traj_actor_delay must be non-negative")
        if self.traj_actor_window < 0:
            raise ValueError("traj_actor_window must be non-negative (0 disables)")
        if self.traj_drift_floor < 0.0:
            raise ValueError("traj_drift_floor must be non-negative")
        if self.traj_critic_weight_decay < 0.0 or self.action_reg < 0.0:
            raise ValueError("traj_critic_weight_decay and action_reg must be non-negative")
        if self.traj_anchor_every < 0:
            raise ValueError("traj_anchor_every must be non-negative (0 disables)")
        if self.update_rounds_budget < 0:
            raise ValueError("update_rounds_budget must be non-negative (0 disables)")


@dataclass
class AgentNets:
    spec: AgentSpec
    actor: MlpParams
    actor_target: MlpParams
    critic: MlpParams
    critic_target: MlpParams
    actor_adam: nn.AdamState
    critic_adam: nn.AdamState


class Trainer:
    """Owns all parameters, buffers, and RNG streams for one training run.

    Seed layout (all via SeedSequence so streams never collide):
    [seed, 0] network init, [seed, 1] exploration noise and batch sampling,
    [seed, 2, episode] training worlds, [seed, 3, j] evaluation worlds.
    The same eval worlds are replayed at every checkpoint so evaluation
    curves are comparable across training.
    """

    def __init__(self, env: EnvSpec, cfg: TrainConfig):
        cfg.validate()
        env.scenario.validate()
        self.env = env
        self.cfg = cfg
        self.sched_specs, self.traj_specs = build_agent_specs(env)
        if cfg.method != "tts-maddpg":
            self.traj_specs = []
        self.state_dim = global_state_dim(len(env.scenario.platforms), env.scenario.n_ues)
        self.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
        self.sched_agents: list[AgentNets] = []
        self.traj_agents: list[AgentNets] = []
        self.sched_buffer = None
        self.traj_buffer = None
        self.update_rounds = 0
        self.drift_decay_from: int | None = None  # first episode with actors unlocked
        self.drift_start_ep = 0  # first episode whose drift can survive into the unlock ring

        if cfg.method == "rr":
            return
        init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
        for spec in self.sched_specs:
            self.sched_agents.append(
                self._make_agent(spec, self.sched_specs, cfg.hidden_width, init_rng)
            )
        for spec in self.traj_specs:
            self.traj_agents.append(
                self._make_agent(spec, self.traj_specs, cfg.traj_hidden_width, init_rng)
            )

        total_sched = cfg.episodes * cfg.slots_per_episode
        self.sched_buffer = ReplayBuffer(
            min(cfg.sched_buffer_capacity, total_sched),
            self.state_dim,
            len(self.sched_specs),
            self.sched_specs[0].obs_dim,
            self.sched_specs[0].action_dim,
        )
        if self.traj_specs:
            per_ep = len(range(0, cfg.slots_per_episode, TRAJECTORY_PERIOD))
            self.traj_buffer = ReplayBuffer(
                min(cfg.traj_buffer_capacity, cfg.episodes * per_ep),
                self.state_dim,
                len(self.traj_specs),
                self.traj_specs[0].obs_dim,
                self.traj_specs[0].action_dim,
            )
            # Drift episodes older than one ring length at the unlock are
            # evicted before the velocity actors ever read the critics, so
            # they carry zero exploration value and only perturb the geometry
            # the link schedulers train on. Derived, not configured: warmup
            # and update cadence fix the unlock episode, the ring capacity
            # fixes the lookback.
            fill_per_ep = cfg.slots_per_episode + per_ep
            rounds_per_ep = max(cfg.slots_per_episode // cfg.slots_per_update, 1)
            unlock_ep = (
                cfg.warmup_transitions / fill_per_ep
                + cfg.traj_actor_delay / rounds_per_ep
            )
            ring_eps = self.traj_buffer.capacity // per_ep
            self.drift_start_ep = max(0, int(unlock_ep) - ring_eps)

    def _make_agent(self, spec: AgentSpec, group: list[AgentSpec], h: int, rng) -> AgentNets:
        actor = nn.init_mlp((spec.obs_dim, h, h, spec.action_dim), "tanh", rng)
        critic_in = self.state_dim + sum(s.action_dim for s in group)
        critic = nn.init_mlp((critic_in, h, h, 1), "linear", rng)
        return AgentNets(
            spec=spec,
            actor=actor,
            actor_target=actor.copy(),
            critic=critic,
            critic_target=critic.copy(),
            actor_adam=nn.init_adam(actor),
            critic_adam=nn.init_adam(critic),
        )

    def train_world_seed(self, episode: int) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.cfg.seed, 2, episode])

    def eval_world_seed(self, j: int) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.cfg.seed, 3, j])

    def _buffer_fill(self) -> int:
        n = len(self.sched_buffer) if self.sched_buffer else 0
        if self.traj_buffer is not None:
            n += len(self.traj_buffer)
        return n

    def drift_std(self, episode: int) -> float:
        """Zero before the unlock ring's lookback begins, full-scale while the
        velocity actors are held, then linear decay to the floor by the final
        episode."""
        cfg = self.cfg
        if not self.traj_agents:
            return 0.0
        if self.update_rounds >= cfg.traj_actor_delay and self.drift_decay_from is None:
            self.drift_decay_from = episode
        if self.drift_decay_from is None:
            return cfg.traj_drift_std if episode >= self.drift_start_ep else 0.0
        floor = min(cfg.traj_drift_floor, cfg.traj_drift_std)
        span = max(cfg.episodes - 1 - self.drift_decay_from, 1)
        frac = min((episode - self.drift_decay_from) / span, 1.0)
        return cfg.traj_drift_std + (floor - cfg.traj_drift_std) * frac

    def traj_actors_stepping(self) -> bool:
        """Velocity actors step only inside [delay, delay + window): held at
        the near-hover initialization while their critics converge, free for
        the window, then held again so the schedulers finish training against
        a settled geometry."""
        cfg = self.cfg
        if self.update_rounds < cfg.traj_actor_delay:
            return False
        if cfg.traj_actor_window <= 0:
            return True
        return self.update_rounds < cfg.traj_actor_delay + cfg.traj_actor_window

    def anchor_episode(self, episode: int) -> bool:
        """Every n-th episode after the velocity unlock flies on drift alone.
        Anchors only matter while the actors are stepping: before the unlock
        every episode is near-hover plus drift already (and skipping them
        keeps the early noise stream, so the scheduler run is unchanged by
        the trajectory exploration settings); after the window closes the
        velocity policy is fixed and the schedulers are better served by
        episodes that fly it."""
        cfg = self.cfg
        return (
            self.drift_decay_from is not None
            and cfg.traj_anchor_every > 0
            and self.traj_actors_stepping()
            and (episode - self.drift_decay_from) % cfg.traj_anchor_every == 0
        )

    def rollout(self, episode: int) -> tuple[EpisodeResult, float]:
        """One training-mode episode on the per-episode derived world seed."""
        cfg = self.cfg
        learn = cfg.method != "rr"
        std = (
            noise_schedule(episode, cfg.episodes, cfg.noise_start, cfg.noise_end,
                           cfg.noise_decay_frac)
            if learn
            else 0.0
        )
        drift = self.drift_std(episode)
        # Until the velocity actors take their first step they fly pure
        # drift: the replay ring then holds a controlled-displacement design
        # with no mixed-in policy output or action noise, which is the
        # cleanest regression target the critics can get.
        held = self.drift_decay_from is None and bool(self.traj_agents)
        anchor = held or self.anchor_episode(episode)
        result = run_episode(
            self.env,
            cfg.method,
            [a.actor for a in self.sched_agents] or None,
            [a.actor for a in self.traj_agents] or None,
            self.train_world_seed(episode),
            cfg.slots_per_episode,
            mode="train" if learn else "eval",
            noise_std=std,
            traj_drift_std=drift,
            traj_explore_only=anchor,
            noise_rng=self.rng,
            sched_buffer=self.sched_buffer,
            traj_buffer=self.traj_buffer,
        )
        return result, std

    def update_round(self) -> None:
        """One batch per group, then a critic and an actor step for every
        agent against that batch, then soft target updates. A no-op once the
        update budget is spent."""
        cfg = self.cfg
        if 0 < cfg.update_rounds_budget <= self.update_rounds:
            return
        # Regularize only velocity actions: hovering is a sane prior for a
        # node, while scheduler priorities are argmax-decoded and harmless
        # at the tanh rails. Velocity actors additionally wait out
        # traj_actor_delay rounds while their critics converge, then step only
        # within traj_actor_window rounds.
        groups = [(self.sched_agents, self.sched_buffer, cfg.gamma, 0.0, 0.0, True)]
        if self.traj_agents:
            groups.append(
                (
                    self.traj_agents,
                    self.traj_buffer,
                    cfg.gamma ** TRAJECTORY_PERIOD,
                    cfg.action_reg,
                    cfg.traj_critic_weight_decay,
                    self.traj_actors_stepping(),
                )
            )
        for agents, buffer, gamma, reg, wd, step_actors in groups:
            if buffer.size < cfg.batch_size:
                continue
            batch = buffer.sample(self.rng, cfg.batch_size)
            next_a = target_actions([a.actor_target for a in agents], batch["next_obs"])
            for i, ag in enumerate(agents):
                y = critic_targets(batch, [], ag.critic_target, gamma, next_actions=next_a)
                update_critic(ag.critic, ag.critic_adam, batch, y, cfg.critic_lr, wd)
                if step_actors:
                    update_actor(
                        i, ag.actor, ag.actor_adam, ag.critic, batch, cfg.actor_lr, reg
                    )
        for ag in self.sched_agents + self.traj_agents:
            nn.soft_update(ag.actor_target, ag.actor, cfg.tau)
            nn.soft_update(ag.critic_target, ag.critic, cfg.tau)
        self.update_rounds += 1

    def train_episode(self, episode: int) -> tuple[EpisodeResult, float]:
        """Rollout plus the episode's update rounds (one per slots_per_update
        environment slots, gated on total buffered transitions)."""
        result, std = self.rollout(episode)
        if self.cfg.method != "rr" and self._buffer_fill() >= self.cfg.warmup_transitions:
            for _ in range(self.cfg.slots_per_episode // self.cfg.slots_per_update):
                self.update_round()
        return result, std

    def evaluate(self) -> list[EpisodeResult]:
        """Noise-off rollouts on the fixed evaluation worlds."""
        return [
            run_episode(
                self.env,
                self.cfg.method,
                [a.actor for a in self.sched_agents] or None,
                [a.actor for a in self.traj_agents] or None,
                self.eval_world_seed(j),
                self.cfg.slots_per_episode,
                mode="eval",
            )
            for j in range(self.cfg.eval_episodes)
        ]

    def save_checkpoints(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for ag in self.sched_agents + self.traj_agents:
            nn.save_params(out / f"{ag.spec.name}_actor.bin", ag.actor)
            nn.save_params(out / f"{ag.spec.name}_actor_target.bin", ag.actor_target)
            nn.save_params(out / f"{ag.spec.name}_critic.bin", ag.critic)
            nn.save_params(out / f"{ag.spec.name}_critic_target.bin", ag.critic_target)

    def load_checkpoints(self, out_dir) -> None:
        out = Path(out_dir)
        for ag in self.sched_agents + self.traj_agents:
            ag.actor = nn.load_params(out / f"{ag.spec.name}_actor.bin")
            ag.actor_target = nn.load_params(out / f"{ag.spec.name}_actor_target.bin")
            ag.critic = nn.load_params(out / f"{ag.spec.name}_critic.bin")
            ag.critic_target = nn.load_params(out / f"{ag.spec.name}_critic_target.bin")
