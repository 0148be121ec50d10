"""Shared-state replay memory.

The buffer is K rows by M columns. A column holds one market transition
(state, next state, company, day) seen by every agent, plus one action and
reward per agent. States are stored once per column, so every agent row of a
column refers to the same arrays; batches draw one column-index vector and
apply it to all rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_CAPACITY = 50_000


@dataclass(frozen=True)
class Episode:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    company: int
    t: int


@dataclass(frozen=True)
class BatchMatrix:
    states: np.ndarray  # (beta, f)
    next_states: np.ndarray  # (beta, f)
    actions: np.ndarray  # (K, beta) in {-1, 0, 1}
    rewards: np.ndarray  # (K, beta)
    company: np.ndarray  # (beta,)
    t: np.ndarray  # (beta,)
    r_vec: np.ndarray  # (beta,) buffer column of each batch column

    @property
    def shape(self) -> tuple[int, int]:
        return self.actions.shape

    def episode(self, i: int, b: int) -> Episode:
        return Episode(
            self.states[b],
            int(self.actions[i, b]),
            float(self.rewards[i, b]),
            self.next_states[b],
            int(self.company[b]),
            int(self.t[b]),
        )


class MemoryBuffer:
    def __init__(self, n_agents: int, state_dim: int, capacity: int = DEFAULT_CAPACITY):
        if n_agents < 1 or state_dim < 1 or capacity < 1:
            raise ValueError("n_agents, state_dim and capacity must be positive")
        self.n_agents = n_agents
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.company = np.zeros(capacity, dtype=np.int64)
        self.t = np.zeros(capacity, dtype=np.int64)
        self.actions = np.zeros((n_agents, capacity), dtype=np.int64)
        self.rewards = np.zeros((n_agents, capacity))
        self.cursor = 0
        self.fill_count = 0

    def __len__(self):
        return self.fill_count

    def store(self, column) -> int:
        """Write one column of K episodes; returns the buffer column used.

        All episodes must share state, next state, company and day.
        """
        column = list(column)
        if len(column) != self.n_agents:
            raise ValueError(f"column has {len(column)} episodes, expected {self.n_agents}")
        head = column[0]
        for i, e in enumerate(column[1:], start=1):
            if not (
                e.company == head.company
                and e.t == head.t
                and np.array_equal(e.s, head.s)
                and np.array_equal(e.s_next, head.s_next)
            ):
                raise ValueError(f"episode {i} does not share agent 0's state")
        for i, e in enumerate(column):
            if e.a not in (-1, 0, 1):
                raise ValueError(f"episode {i} has invalid action {e.a}")
        m = self.cursor
        self.states[m] = head.s
        self.next_states[m] = head.s_next
        self.company[m] = head.company
        self.t[m] = head.t
        self.actions[:, m] = [e.a for e in column]
        self.rewards[:, m] = [e.r for e in column]
        self.cursor = (m + 1) % self.capacity
        self.fill_count = min(self.fill_count + 1, self.capacity)
        return m

    def column(self, m: int) -> list[Episode]:
        if not 0 <= m < self.fill_count:
            raise IndexError(f"column {m} is not occupied")
        return [
            Episode(self.states[m], int(self.actions[i, m]), float(self.rewards[i, m]),
                    self.next_states[m], int(self.company[m]), int(self.t[m]))
            for i in range(self.n_agents)
        ]

    def sample_batch(self, beta: int, rng: np.random.Generator) -> BatchMatrix:
        """Draw ``beta`` occupied columns uniformly with replacement.

        One index vector is drawn per call and shared by all agent rows.
        """
        if self.fill_count == 0:
            raise ValueError("cannot sample from an empty buffer")
        if beta < 1:
            raise ValueError(f"batch size must be positive, got {beta}")
        r = rng.integers(0, self.fill_count, size=beta)
        return BatchMatrix(
            self.states[r],
            self.next_states[r],
            self.actions[:, r],
            self.rewards[:, r],
            self.company[r],
            self.t[r],
            r,
        )
