"""Limited-memory BFGS inverse metric with a ``I / kappa`` base matrix."""
from __future__ import annotations

from collections import deque

import numpy as np

SKIP_TOL = 1e-12


class LbfgsMemory:
    """Generating list of at most ``capacity`` curvature pairs ``(s, y)``.

    Pairs with ``s^T y <= 1e-12 ||s|| ||y||`` are skipped, which keeps the
    implicit matrix positive definite.  ``seed`` picks the matrix the two-
    loop recursion starts from: ``"kappa"`` uses ``I / kappa``, ``"bb"``
    uses the usual ``(s^T y / y^T y) I`` scaling of the newest pair.  The
    blended direction always interpolates towards ``I / kappa``.
    """

    def __init__(self, kappa, capacity=100, seed="kappa"):
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        if capacity < 1:
            raise ValueError("memory capacity must be >= 1")
        if seed not in ("kappa", "bb"):
            raise ValueError(f"unknown seed {seed!r}")
        self.kappa = float(kappa)
        self.capacity = int(capacity)
        self.seed = seed
        self.pairs = deque(maxlen=self.capacity)  # (s, y, 1 / s^T y)
        self.skipped = 0
        self.last_apply_dots = 0

    def __len__(self):
        return len(self.pairs)

    def update(self, s, y):
        """Append ``(s, y)`` unless the curvature test fails; True if stored."""
        s = np.array(s, dtype=np.float64)
        y = np.array(y, dtype=np.float64)
        sy = float(s @ y)
        if (not np.isfinite(sy) or sy <= SKIP_TOL * np.linalg.norm(s) * np.linalg.norm(y)
                or not np.isfinite(1.0 / sy)):
            self.skipped += 1
            return False
        self.pairs.append((s, y, 1.0 / sy))
        return True

    def _seed(self, q):
        if self.seed == "bb" and self.pairs:
            s, y, rho = self.pairs[-1]
            return q / (rho * float(y @ y))
        return q / self.kappa

    def two_loop(self, g):
        """``H_k g`` by the two-loop recursion; ``2 l`` inner products."""
        q = np.array(g, dtype=np.float64)
        dots = 0
        alphas = []
        for s, y, rho in reversed(self.pairs):
            a = rho * float(s @ q)
            q -= a * y
            alphas.append(a)
            dots += 1
        r = self._seed(q)
        for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
            beta = rho * float(y @ r)
            r += (a - beta) * s
            dots += 1
        if self.seed == "bb" and self.pairs:
            dots += 1
        self.last_apply_dots = dots
        return r

    def blend(self, hg, g, eta):
        """``eta * H_k g + (1 - eta) * g / kappa`` from a precomputed ``H_k g``."""
        if eta == 1.0:
            return hg.copy()
        if eta == 0.0 or not self.pairs:
            return g / self.kappa
        return eta * hg + (1.0 - eta) * (g / self.kappa)

    def apply(self, g, eta=1.0):
        if not 0.0 <= eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if eta == 0.0:
            self.last_apply_dots = 0
            return np.asarray(g, dtype=np.float64) / self.kappa
        return self.blend(self.two_loop(g), np.asarray(g, dtype=np.float64), eta)


def update(mem, s, y):
    mem.update(s, y)
    return mem


def apply(mem, g, eta=1.0):
    return mem.apply(g, eta)
