"""The K-agent ensemble: architectures, Q-values, actions and confidence.

Q-rows are ordered ``[Long, Neutral, Short]``; actions are encoded as
``+1 / 0 / -1`` so that ``action = 1 - argmax(q_row)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .neural import (
    AdamState,
    CheckpointError,
    MlpParams,
    init_mlp,
    load_params,
    mlp_forward,
    save_params,
    snapshot,
)

LONG, NEUTRAL, SHORT = 1, 0, -1
N_ACTIONS = 3
DEFAULT_BASE_SIZES = (32, 16)
BLOCK = 4

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class AgentSpec:
    index: int
    hidden_sizes: tuple[int, ...]
    input_dim: int
    output_dim: int = N_ACTIONS

    def __post_init__(self):
        if self.output_dim != N_ACTIONS:
            raise ValueError("agents always output 3 action values")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_sizes, self.output_dim)


@dataclass
class Agent:
    spec: AgentSpec
    online: MlpParams
    target: MlpParams
    adam: AdamState


def build_ensemble(K: int, f: int, base_sizes=DEFAULT_BASE_SIZES) -> list[AgentSpec]:
    """Architectures for K agents.

    Within each block of four, agent ``p`` prepends ``p`` layers, each twice as
    wide as the one after it: [32, 16], [64, 32, 16], [128, 64, 32, 16], ...
    Blocks repeat for K > 4.
    """
    if K < 1:
        raise ValueError(f"need at least one agent, got K={K}")
    base = tuple(int(s) for s in base_sizes)
    if not base:
        raise ValueError("base_sizes must be non-empty")
    specs = []
    for i in range(K):
        p = i % BLOCK
        extra = tuple(base[0] * 2 ** (p - k) for k in range(p))
        specs.append(AgentSpec(i, extra + base, int(f)))
    return specs


def make_agent(spec: AgentSpec, rng: np.random.Generator) -> Agent:
    online = init_mlp(spec.sizes, rng)
    return Agent(spec, online, snapshot(online), AdamState.zeros_like(online))


def make_ensemble(K: int, f: int, seed: int = 0, base_sizes=DEFAULT_BASE_SIZES) -> list[Agent]:
    """Freshly initialised agents; each gets its own seeded init stream."""
    specs = build_ensemble(K, f, base_sizes)
    streams = np.random.SeedSequence([seed, 0]).spawn(K)
    return [make_agent(s, np.random.default_rng(ss)) for s, ss in zip(specs, streams)]


def q_values(agent: Agent, states, which: str = "online", mode: str = "eval") -> np.ndarray:
    """Action values for a (B, f) batch of states, shape (B, 3).

    Train mode on the online net also refreshes its running BN statistics.
    """
    if which == "online":
        params = agent.online
    elif which == "target":
        params = agent.target
    else:
        raise ValueError(f"which must be 'online' or 'target', got {which!r}")
    out, _ = mlp_forward(params, states, mode, update_stats=which == "online")
    return out


def greedy_action(q_row) -> int:
    # np.argmax returns the first maximum: ties go Long > Neutral > Short
    return 1 - int(np.argmax(np.asarray(q_row)))


def epsilon_greedy(q_row, epsilon: float, rng: np.random.Generator) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return 1 - int(rng.integers(N_ACTIONS))
    return greedy_action(q_row)


def positional_confidence(q):
    """Long value minus Short value; works on one row or a (B, 3) batch."""
    q = np.asarray(q)
    return q[..., 0] - q[..., 2]


def sync_target(agent: Agent) -> None:
    agent.target = snapshot(agent.online)


def save_ensemble(agents: list[Agent], directory, iterations: int = 0, **extra) -> None:
    """Write one online and one target checkpoint per agent plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": MANIFEST_VERSION,
        "K": len(agents),
        "f": agents[0].spec.input_dim,
        "hidden_sizes": [list(a.spec.hidden_sizes) for a in agents],
        "iterations": int(iterations),
        "files": [],
    }
    manifest.update(extra)
    for a in agents:
        online, target = f"agent_{a.spec.index:02d}.online.bin", f"agent_{a.spec.index:02d}.target.bin"
        save_params(a.online, directory / online)
        save_params(a.target, directory / target)
        manifest["files"].append({"online": online, "target": target})
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_ensemble(directory) -> tuple[list[Agent], dict]:
    """Inverse of :func:`save_ensemble`. Adam moments start from zero."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST_NAME).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read manifest in {directory}: {exc}") from exc
    try:
        if manifest["version"] != MANIFEST_VERSION:
            raise CheckpointError(f"unsupported manifest version {manifest['version']}")
        K, f = int(manifest["K"]), int(manifest["f"])
        sizes, files = manifest["hidden_sizes"], manifest["files"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed manifest in {directory}") from exc
    if len(sizes) != K or len(files) != K:
        raise CheckpointError("manifest agent count disagrees with its entries")
    agents = []
    for i in range(K):
        spec = AgentSpec(i, tuple(sizes[i]), f)
        online = load_params(directory / files[i]["online"])
        target = load_params(directory / files[i]["target"])
        if online.sizes != spec.sizes or target.sizes != spec.sizes:
            raise CheckpointError(f"agent {i} checkpoint shape {online.sizes} != manifest {spec.sizes}")
        agents.append(Agent(spec, online, target, AdamState.zeros_like(online)))
    return agents, manifest
