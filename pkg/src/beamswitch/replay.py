"""Sum-tree backed prioritized experience replay.

Array-heap layout: internal nodes 0..capacity-2, leaves
capacity-1..2*capacity-2; a parent holds the sum of its children, the
root the total priority mass. Updates and prefix-sum descent are
vectorized over whole batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    user_id: int = 0


class SumTree:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.nodes = np.zeros(2 * capacity - 1)
        self.data: list = [None] * capacity
        self.write = 0
        self.size = 0

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    def leaf_values(self) -> np.ndarray:
        return self.nodes[self.capacity - 1 :]

    def set_many(self, data_indices: np.ndarray, values: np.ndarray):
        """Set leaf values and repair all ancestor sums (batched, O(B log N))."""
        data_indices = np.asarray(data_indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if len(data_indices) == 0:
            return
        # duplicates: keep the last write for each leaf
        rev_uniq, rev_pos = np.unique(data_indices[::-1], return_index=True)
        keep = len(data_indices) - 1 - rev_pos
        idx = rev_uniq + self.capacity - 1
        delta = values[keep] - self.nodes[idx]
        self.nodes[idx] = values[keep]
        while True:
            live = idx > 0
            if not live.any():
                break
            idx = (idx[live] - 1) // 2
            delta = delta[live]
            np.add.at(self.nodes, idx, delta)

    def add(self, value: float, item) -> int:
        """Append at the write cursor (ring eviction); returns the data index."""
        i = self.write
        self.data[i] = item
        self.set_many(np.array([i]), np.array([value]))
        self.write = (self.write + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def find(self, prefix: np.ndarray) -> np.ndarray:
        """Descend for each prefix sum in [0, total); returns data indices."""
        n = len(self.nodes)
        idx = np.zeros(len(prefix), dtype=np.int64)
        prefix = np.asarray(prefix, dtype=np.float64).copy()
        while True:
            left = 2 * idx + 1
            internal = left < n
            if not internal.any():
                break
            safe_left = np.where(internal, left, 0)
            left_sum = self.nodes[safe_left]
            go_left = prefix <= left_sum
            step_idx = np.where(go_left, safe_left, safe_left + 1)
            idx = np.where(internal, step_idx, idx)
            prefix = np.where(internal & ~go_left, prefix - left_sum, prefix)
        return idx - (self.capacity - 1)


class PriorityBuffer:
    """Replay store sampling transitions proportional to priority^alpha.

    Raw priorities are |TD error| + epsilon; leaves hold priority^alpha so
    the tree descent directly realizes the p^alpha / sum p^alpha law. New
    transitions enter at the running max raw priority (1.0 when empty).
    """

    def __init__(
        self,
        capacity: int = 100_000,
        alpha: float = 0.6,
        beta: float = 0.4,
        epsilon_priority: float = 0.01,
    ):
        self.tree = SumTree(capacity)
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        self.epsilon_priority = epsilon_priority
        self.max_priority = 1.0

    def __len__(self) -> int:
        return self.tree.size

    def push(self, transition: Transition) -> int:
        return self.tree.add(self.max_priority**self.alpha, transition)

    def sample(self, batch: int, rng: np.random.Generator, beta: float | None = None):
        """Stratified proportional draw.

        Returns (transitions, data_indices, is_weights); weights are
        (N * P(i))^-beta normalized by the batch max.
        """
        if batch > len(self):
            raise ValueError(f"batch {batch} exceeds buffer size {len(self)}")
        if beta is None:
            beta = self.beta
        total = self.tree.total
        segment = total / batch
        prefix = (np.arange(batch) + rng.random(batch)) * segment
        indices = self.tree.find(prefix)
        # float drift in the descent could land on an unfilled trailing leaf
        indices = np.minimum(indices, len(self) - 1)
        leaf = self.tree.leaf_values()[indices]
        probs = leaf / total
        weights = (len(self) * probs) ** (-beta)
        weights = weights / weights.max()
        transitions = [self.tree.data[i] for i in indices]
        return transitions, indices, weights

    def update_priorities(self, indices: np.ndarray, td_errors: np.ndarray):
        raw = np.abs(np.asarray(td_errors, dtype=np.float64)) + self.epsilon_priority
        if len(raw):
            self.max_priority = max(self.max_priority, float(raw.max()))
        self.tree.set_many(indices, raw**self.alpha)
