"""Per-user UCB1 bandits over the beam codebook."""

from __future__ import annotations

from collections import deque

import numpy as np

BANDIT_SNR_MAX_DB = 60.0


def bandit_reward(snr_db_value: float) -> float:
    """Bounded bandit reward: clamp(SNR, 0, 60)/60."""
    return min(max(snr_db_value, 0.0), BANDIT_SNR_MAX_DB) / BANDIT_SNR_MAX_DB


class UcbState:
    """Independent UCB1 state per user: pull counts, running means, step totals.

    ``window`` (optional) keeps only the last ``window`` pulls per user in
    the statistics, for non-stationary rewards; off by default.
    """

    def __init__(self, n_users: int, n_arms: int, c: float = 2.0, window: int | None = None):
        if window is not None and window < 1:
            raise ValueError("window must be >= 1 when set")
        self.n_users = n_users
        self.n_arms = n_arms
        self.c = c
        self.window = window
        self.counts = np.zeros((n_users, n_arms), dtype=np.int64)
        self.means = np.zeros((n_users, n_arms))
        self.totals = np.zeros(n_users, dtype=np.int64)
        self._history = [deque() for _ in range(n_users)] if window is not None else None

    def select(self, user: int) -> int:
        """Lowest-index unpulled arm first, then argmax of mean + c*sqrt(ln t / n)."""
        counts = self.counts[user]
        unpulled = np.flatnonzero(counts == 0)
        if unpulled.size:
            return int(unpulled[0])
        bonus = self.c * np.sqrt(np.log(self.totals[user]) / counts)
        return int(np.argmax(self.means[user] + bonus))

    def update(self, user: int, arm: int, reward: float):
        if not 0 <= arm < self.n_arms:
            raise ValueError("arm out of range")
        self.counts[user, arm] += 1
        self.totals[user] += 1
        n = self.counts[user, arm]
        self.means[user, arm] += (reward - self.means[user, arm]) / n
        if self._history is not None:
            hist = self._history[user]
            hist.append((arm, reward))
            if len(hist) > self.window:
                old_arm, old_r = hist.popleft()
                m = self.counts[user, old_arm]
                if m <= 1:
                    self.counts[user, old_arm] = 0
                    self.means[user, old_arm] = 0.0
                else:
                    self.means[user, old_arm] = (self.means[user, old_arm] * m - old_r) / (m - 1)
                    self.counts[user, old_arm] = m - 1
                self.totals[user] -= 1

    def select_all(self) -> np.ndarray:
        return np.array([self.select(u) for u in range(self.n_users)], dtype=np.int64)
