"""Proportional prioritized experience replay.

Transitions live in preallocated ring arrays that grow geometrically up to
``capacity``; priorities live in a sum tree so sampling and updates are
O(log N) and vectorised across the minibatch.
"""

from __future__ import annotations

import numpy as np


class SumTree:
    def __init__(self, capacity: int):
        size = 1
        while size < capacity:
            size *= 2
        self.size = size
        self.depth = size.bit_length() - 1
        self.tree = np.zeros(2 * size)

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def leaves(self, idx: np.ndarray) -> np.ndarray:
        return self.tree[self.size + np.asarray(idx)]

    def update(self, idx, values) -> None:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        values = np.broadcast_to(np.asarray(values, dtype=float), idx.shape)
        pos = idx + self.size
        # duplicates: last write wins, same as a sequential loop
        self.tree[pos] = values
        pos = np.unique(pos // 2)
        while pos[0] >= 1:
            self.tree[pos] = self.tree[2 * pos] + self.tree[2 * pos + 1]
            if pos[0] == 1:
                break
            pos = np.unique(pos // 2)

    def find(self, mass: np.ndarray) -> np.ndarray:
        """Leaf index whose cumulative-priority interval contains each ``mass``."""
        mass = np.array(mass, dtype=float)
        node = np.ones(mass.shape, dtype=np.int64)
        for _ in range(self.depth):
            left = 2 * node
            left_sum = self.tree[left]
            go_right = mass >= left_sum
            # never descend into an empty subtree through float round-off
            go_right &= self.tree[left + 1] > 0
            go_right |= left_sum <= 0
            mass = np.where(go_right, mass - left_sum, mass)
            node = np.where(go_right, left + 1, left)
        return node - self.size


class PrioritizedReplay:
    def __init__(
        self,
        capacity: int,
        obs_dim: int,
        n_branches: int,
        alpha: float = 0.6,
        beta0: float = 0.4,
        beta_anneal_steps: int = 2_000_000,
        eps: float = 1e-6,
    ):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.n_branches = n_branches
        self.alpha = alpha
        self.beta0 = beta0
        self.beta_anneal_steps = beta_anneal_steps
        self.eps = eps
        self.tree = SumTree(self.capacity)
        self.max_priority = 1.0
        self.size = 0
        self.next = 0
        self._alloc = 0
        self.s = np.zeros((0, obs_dim))
        self.s_next = np.zeros((0, obs_dim))
        self.a = np.zeros((0, n_branches), dtype=np.int64)
        self.r = np.zeros(0)
        self.done = np.zeros(0, dtype=bool)

    def __len__(self) -> int:
        return self.size

    def beta(self, step: int) -> float:
        frac = min(1.0, step / self.beta_anneal_steps) if self.beta_anneal_steps > 0 else 1.0
        return self.beta0 + (1.0 - self.beta0) * frac

    def _grow(self):
        new = min(self.capacity, max(1024, 2 * self._alloc))

        def pad(arr):
            out = np.zeros((new, *arr.shape[1:]), dtype=arr.dtype)
            out[: self._alloc] = arr
            return out

        self.s, self.s_next, self.a = pad(self.s), pad(self.s_next), pad(self.a)
        self.r, self.done = pad(self.r), pad(self.done)
        self._alloc = new

    def add(self, s, a, r, s_next, done) -> int:
        slot = self.next
        if slot >= self._alloc:
            self._grow()
        self.s[slot] = s
        self.a[slot] = a
        self.r[slot] = r
        self.s_next[slot] = s_next
        self.done[slot] = done
        self.tree.update(slot, self.max_priority**self.alpha)
        self.next = (slot + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return slot

    def sample(self, batch_size: int, rng: np.random.Generator, step: int = 0):
        """Stratified proportional draw; returns (indices, batch dict, importance weights)."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        total = self.tree.total
        bounds = np.linspace(0.0, total, batch_size + 1)
        mass = rng.uniform(bounds[:-1], bounds[1:])
        idx = self.tree.find(np.minimum(mass, np.nextafter(total, 0.0)))
        idx = np.minimum(idx, self.size - 1)
        probs = self.tree.leaves(idx) / total
        weights = (self.size * probs) ** (-self.beta(step))
        weights = weights / weights.max()
        batch = {
            "s": self.s[idx],
            "a": self.a[idx],
            "r": self.r[idx],
            "s_next": self.s_next[idx],
            "done": self.done[idx],
        }
        return idx, batch, weights

    def update_priorities(self, idx: np.ndarray, priorities: np.ndarray) -> None:
        priorities = np.asarray(priorities, dtype=float)
        if (priorities <= 0).any() or not np.isfinite(priorities).all():
            raise ValueError("priorities must be positive and finite")
        self.tree.update(idx, priorities**self.alpha)
        self.max_priority = max(self.max_priority, float(priorities.max()))

    def raw_priorities(self) -> np.ndarray:
        return self.tree.leaves(np.arange(self.size))

    def state_arrays(self) -> dict[str, np.ndarray]:
        n = self.size
        return {
            "replay.s": self.s[:n].copy(),
            "replay.a": self.a[:n].copy(),
            "replay.r": self.r[:n].copy(),
            "replay.s_next": self.s_next[:n].copy(),
            "replay.done": self.done[:n].copy(),
            "replay.priority": self.raw_priorities(),
            "replay.meta": np.array([self.next, self.size], dtype=np.int64),
            "replay.max_priority": np.array([self.max_priority]),
        }

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        n = int(arrays["replay.meta"][1])
        while self._alloc < n:
            self._grow()
        self.s[:n] = arrays["replay.s"]
        self.a[:n] = arrays["replay.a"]
        self.r[:n] = arrays["replay.r"]
        self.s_next[:n] = arrays["replay.s_next"]
        self.done[:n] = arrays["replay.done"]
        self.tree.update(np.arange(n), arrays["replay.priority"])
        self.next = int(arrays["replay.meta"][0])
        self.size = n
        self.max_priority = float(arrays["replay.max_priority"][0])
