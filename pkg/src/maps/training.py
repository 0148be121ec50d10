"""Cooperative multi-agent DQN training.

Each agent minimises ``(1 - lam) * local + lam * global`` where ``local`` is
its summed squared TD error on the shared batch and ``global`` is the sum of
squared Pearson correlations between its own positional-confidence vector
(online net) and every other agent's (target net) over the batch columns.

Target networks are evaluated in eval mode (running BN statistics), so their
outputs for a fixed input stay bit-stable between syncs.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .agents import Agent, epsilon_greedy, positional_confidence, q_values, sync_target
from .market_data import DEFAULT_WINDOW, MarketFrame, daily_return_pct, make_state
from .neural import adam_step, mlp_backward, mlp_forward
from .replay import DEFAULT_CAPACITY, BatchMatrix, Episode, MemoryBuffer

log = logging.getLogger(__name__)

TD_FORMS = ("standard", "printed")
# population variance below this makes a correlation undefined
DEGENERATE_VAR = 1e-20

LOG_FIELDS = ["iteration", "agent", "local_loss", "global_loss", "total_loss", "epsilon", "mean_pairwise_corr"]


class TrainingDivergedError(ArithmeticError):
    def __init__(self, iteration: int, agent: int, what: str = "loss"):
        super().__init__(f"non-finite {what} at iteration {iteration} for agent {agent}")
        self.iteration = iteration
        self.agent = agent


@dataclass
class TrainConfig:
    maxiter: int = 400_000
    batch_size: int = 128
    sync_every: int = 1000
    lam: float = 0.8
    gamma: float = 0.99
    lr: float = 1e-5
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_decay_frac: float = 0.25
    buffer_size: int = DEFAULT_CAPACITY
    window: int = DEFAULT_WINDOW
    probe_every: int = 10_000
    log_every: int = 100
    td_form: str = "standard"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.sync_every < 1 or self.probe_every < 1 or self.log_every < 1:
            raise ValueError("sync_every, probe_every and log_every must be positive")
        if self.maxiter < 0:
            raise ValueError("maxiter must be non-negative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.eps_end <= 1 and 0 <= self.eps_start <= 1):
            raise ValueError("epsilon bounds must lie in [0, 1]")
        if not 0 <= self.eps_decay_frac <= 1:
            raise ValueError("eps_decay_frac must lie in [0, 1]")
        if self.window < 2 or self.buffer_size < 1:
            raise ValueError("window must be >= 2 and buffer_size >= 1")
        if self.td_form not in TD_FORMS:
            raise ValueError(f"td_form must be one of {TD_FORMS}")

    def epsilon(self, iteration: int) -> float:
        """Linear decay over the first ``eps_decay_frac`` of training, then flat."""
        decay = self.eps_decay_frac * self.maxiter
        if decay <= 0:
            return self.eps_end
        frac = min(1.0, max(0, iteration - 1) / decay)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


@dataclass(frozen=True)
class LossReport:
    iteration: int
    agent: int
    local_loss: float
    global_loss: float
    total_loss: float


@dataclass
class TrainingLog:
    reports: list[LossReport] = field(default_factory=list)
    epsilons: dict[int, float] = field(default_factory=dict)
    probes: list[tuple[int, float]] = field(default_factory=list)
    degenerate_pairs: int = 0
    iterations: int = 0

    def rows(self):
        probe = dict(self.probes)
        for rep in self.reports:
            corr = probe.get(rep.iteration)
            yield [
                rep.iteration,
                rep.agent,
                repr(rep.local_loss),
                repr(rep.global_loss),
                repr(rep.total_loss),
                repr(self.epsilons[rep.iteration]),
                "" if corr is None else repr(corr),
            ]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_FIELDS)
            w.writerows(self.rows())

    def probe_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "mean_confidence_corr"])
            w.writerows([it, repr(v)] for it, v in self.probes)


def immediate_reward(a: int, R: float) -> float:
    if a not in (-1, 0, 1):
        raise ValueError(f"action must be -1, 0 or 1, got {a}")
    return a * R


def generate_episodes(agents, frame: MarketFrame, f: int, epsilon: float, rng, n_columns: int = 1, agent_rngs=None):
    """Sample ``n_columns`` (company, day) pairs and act on them with every agent.

    Days are drawn from ``f-1 .. T-2`` so both the window and the next-day
    transition exist. Each agent picks its action epsilon-greedily from its
    online net (eval mode); ``agent_rngs`` gives per-agent exploration streams
    and defaults to ``rng``.
    """
    N, T = frame.n_companies, frame.n_days
    if T < f + 1:
        raise ValueError(f"frame has {T} days, needs at least {f + 1}")
    agent_rngs = agent_rngs or [rng] * len(agents)
    columns = []
    for _ in range(n_columns):
        c = int(rng.integers(N))
        t = int(rng.integers(f - 1, T - 1))
        s = make_state(frame, c, t, f).values
        s_next = make_state(frame, c, t + 1, f).values
        R = daily_return_pct(frame, c, t)
        col = []
        for agent, arng in zip(agents, agent_rngs):
            q = q_values(agent, s[None, :], "online", "eval")[0]
            a = epsilon_greedy(q, epsilon, arng)
            col.append(Episode(s, a, immediate_reward(a, R), s_next, c, t))
        columns.append(col)
    return columns


def local_loss_terms(q, actions, rewards, q_next, gamma: float, td_form: str = "standard"):
    """Summed squared TD error and its gradient w.r.t. the online outputs ``q``.

    ``q`` is (B, 3) online values on the states, ``q_next`` (B, 3) target
    values on the next states. ``td_form="printed"`` uses ``Q - r + gamma*max``
    instead of ``Q - (r + gamma*max)``.
    """
    q = np.asarray(q, dtype=np.float64)
    cols = 1 - np.asarray(actions, dtype=np.int64)
    rows = np.arange(q.shape[0])
    boot = gamma * np.max(q_next, axis=1)
    if td_form == "standard":
        delta = q[rows, cols] - (rewards + boot)
    elif td_form == "printed":
        delta = q[rows, cols] - rewards + boot
    else:
        raise ValueError(f"unknown td_form {td_form!r}")
    dq = np.zeros_like(q)
    dq[rows, cols] = 2.0 * delta
    return float(np.sum(delta * delta)), dq


def pearson(x, y) -> float:
    """Pearson correlation with population moments; nan if either side is flat."""
    xc = np.asarray(x, dtype=np.float64) - np.mean(x)
    yc = np.asarray(y, dtype=np.float64) - np.mean(y)
    sxx, syy = xc @ xc, yc @ yc
    n = len(xc)
    if sxx / n <= DEGENERATE_VAR or syy / n <= DEGENERATE_VAR:
        return float("nan")
    return float(xc @ yc / np.sqrt(sxx * syy))


def global_loss_terms(eta, others):
    """Sum of squared correlations between ``eta`` and each vector in ``others``.

    Returns ``(loss, d loss / d eta, n_degenerate)``. Pairs where either
    vector has (near) zero variance contribute nothing and are counted.
    """
    x = np.asarray(eta, dtype=np.float64)
    n = len(x)
    xc = x - x.mean()
    sxx = xc @ xc
    loss, grad, degenerate = 0.0, np.zeros(n), 0
    for y in others:
        yc = np.asarray(y, dtype=np.float64) - np.mean(y)
        syy = yc @ yc
        if sxx / n <= DEGENERATE_VAR or syy / n <= DEGENERATE_VAR:
            degenerate += 1
            continue
        norm = np.sqrt(sxx * syy)
        rho = (xc @ yc) / norm
        loss += rho * rho
        # d rho / d x = yc / norm - rho * xc / sxx  (both already centred)
        grad += 2.0 * rho * (yc / norm - rho * xc / sxx)
    return float(loss), grad, degenerate


def total_loss(local: float, glob: float, lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must be in [0, 1], got {lam}")
    return (1.0 - lam) * local + lam * glob


def target_views(agents, batch: BatchMatrix):
    """Per-agent target confidences on the states and target values on next states."""
    both = np.vstack([batch.states, batch.next_states])
    n = len(batch.states)
    conf, q_next = [], []
    for agent in agents:
        q = q_values(agent, both, "target", "eval")
        conf.append(positional_confidence(q[:n]))
        q_next.append(q[n:])
    return conf, q_next


def local_loss(agent: Agent, batch: BatchMatrix, i: int, gamma: float, td_form: str = "standard"):
    """Local loss of agent ``i`` on its batch row, with gradients w.r.t. its online net."""
    q, trace = mlp_forward(agent.online, batch.states, "train", update_stats=False)
    q_next = q_values(agent, batch.next_states, "target", "eval")
    loss, dq = local_loss_terms(q, batch.actions[i], batch.rewards[i], q_next, gamma, td_form)
    return loss, mlp_backward(agent.online, trace, dq)


def global_loss(agents, batch: BatchMatrix, i: int):
    """Global loss of agent ``i`` and gradients w.r.t. its online net.

    Returns ``(loss, grads, n_degenerate)``.
    """
    q, trace = mlp_forward(agents[i].online, batch.states, "train", update_stats=False)
    others = [
        positional_confidence(q_values(a, batch.states, "target", "eval"))
        for j, a in enumerate(agents)
        if j != i
    ]
    loss, deta, ndeg = global_loss_terms(positional_confidence(q), others)
    dq = np.zeros_like(q)
    dq[:, 0], dq[:, 2] = deta, -deta
    return loss, mlp_backward(agents[i].online, trace, dq), ndeg


def agent_loss(agents, i: int, batch: BatchMatrix, target_conf, target_next, lam: float, gamma: float,
               td_form: str = "standard", update_stats: bool = True):
    """Combined loss of agent ``i`` in one train-mode pass.

    ``target_conf``/``target_next`` come from :func:`target_views`. Returns
    ``(local, global, total, grads, n_degenerate)``.
    """
    agent = agents[i]
    q, trace = mlp_forward(agent.online, batch.states, "train", update_stats=update_stats)
    local, dq_local = local_loss_terms(q, batch.actions[i], batch.rewards[i], target_next[i], gamma, td_form)
    others = [c for j, c in enumerate(target_conf) if j != i]
    glob, deta, ndeg = global_loss_terms(positional_confidence(q), others)
    dq = (1.0 - lam) * dq_local
    dq[:, 0] += lam * deta
    dq[:, 2] -= lam * deta
    grads = mlp_backward(agent.online, trace, dq)
    return local, glob, total_loss(local, glob, lam), grads, ndeg


def train(agents, frame: MarketFrame, config: TrainConfig, buffer: MemoryBuffer | None = None,
          probe_frame: MarketFrame | None = None) -> TrainingLog:
    """Run the training loop in place on ``agents``.

    Per iteration: store one freshly generated episode column, sample a shared
    batch, take one Adam step per agent on its combined loss (targets fixed for
    the whole iteration), and sync every target each ``sync_every`` iterations.
    When ``probe_frame`` is given and K >= 2, the mean absolute pairwise
    confidence correlation on it is recorded every ``probe_every`` iterations
    and at the end.
    """
    from .backtest import confidence_correlation_probe

    K, f = len(agents), config.window
    if any(a.spec.input_dim != f for a in agents):
        raise ValueError("agent input width does not match config.window")
    if frame.n_days < f + 1:
        raise ValueError(f"training frame has {frame.n_days} days, needs at least {f + 1}")
    buffer = MemoryBuffer(K, f, config.buffer_size) if buffer is None else buffer

    root = np.random.SeedSequence([config.seed, 1])
    env_ss, batch_ss, *agent_ss = root.spawn(2 + K)
    env_rng, batch_rng = np.random.default_rng(env_ss), np.random.default_rng(batch_ss)
    agent_rngs = [np.random.default_rng(s) for s in agent_ss]

    run_log = TrainingLog()
    probing = probe_frame is not None and K >= 2
    for it in range(1, config.maxiter + 1):
        eps = config.epsilon(it)
        for column in generate_episodes(agents, frame, f, eps, env_rng, 1, agent_rngs):
            buffer.store(column)
        batch = buffer.sample_batch(config.batch_size, batch_rng)
        target_conf, target_next = target_views(agents, batch)

        record = it % config.log_every == 0 or it == config.maxiter
        probe_now = probing and (it % config.probe_every == 0 or it == config.maxiter)
        results = []
        for i in range(K):
            local, glob, tot, grads, ndeg = agent_loss(
                agents, i, batch, target_conf, target_next, config.lam, config.gamma, config.td_form
            )
            if not np.isfinite(tot):
                raise TrainingDivergedError(it, i)
            run_log.degenerate_pairs += ndeg
            results.append((local, glob, tot, grads))
        for i, (local, glob, tot, grads) in enumerate(results):
            try:
                adam_step(agents[i].online, grads, agents[i].adam, config.lr,
                          config.adam_beta1, config.adam_beta2, config.adam_eps)
            except FloatingPointError as exc:
                raise TrainingDivergedError(it, i, "gradient") from exc
            if record or probe_now:
                run_log.reports.append(LossReport(it, i, local, glob, tot))
        if record or probe_now:
            run_log.epsilons[it] = eps
        if it % config.sync_every == 0:
            for agent in agents:
                sync_target(agent)
        if probe_now:
            value = confidence_correlation_probe(agents, probe_frame, f)
            run_log.probes.append((it, value))
            log.info("iter %d: mean confidence correlation %.4f", it, value)
        run_log.iterations = it
    return run_log
