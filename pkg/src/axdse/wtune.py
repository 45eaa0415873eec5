"""Retraining-free weight tuning.

For every stored weight code ``w`` the tuned code is the ``w'`` that
minimises ``sum_a |M(a, w') - a*w|`` over all activation codes ``a``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mult import MultiplierModel, exact_products

# rows of the (w, w', a) cost cube handled per step; bounds memory to ~64 MB at w=8
_CHUNK_ELEMS = 1 << 23


@dataclass(frozen=True, eq=False)
class WeightMap:
    multiplier_name: str
    bit_width: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int64)
        n = 1 << self.bit_width
        if entries.shape != (n,):
            raise ValueError(f"weight map needs {n} entries, got shape {entries.shape}")
        if entries.min() < 0 or entries.max() >= n:
            raise ValueError("weight map entries out of operand range")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def __eq__(self, other):
        if not isinstance(other, WeightMap):
            return NotImplemented
        return (self.multiplier_name, self.bit_width) == (other.multiplier_name, other.bit_width) and np.array_equal(
            self.entries, other.entries
        )

    def __getitem__(self, w):
        return self.entries[w]

    def changed(self) -> np.ndarray:
        """Weight codes the map moves."""
        return np.flatnonzero(self.entries != np.arange(self.entries.size))

    def is_identity(self) -> bool:
        return self.changed().size == 0

    def to_json(self) -> str:
        doc = {"multiplier": self.multiplier_name, "bit_width": self.bit_width, "map": self.entries.tolist()}
        return json.dumps(doc, separators=(",", ":")) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> WeightMap:
        doc = json.loads(Path(path).read_text())
        return cls(doc["multiplier"], int(doc["bit_width"]), np.asarray(doc["map"]))


def identity_map(m: MultiplierModel) -> WeightMap:
    return WeightMap(m.name, m.bit_width, np.arange(m.size))


def weight_costs(m: MultiplierModel) -> np.ndarray:
    """Integer cost matrix ``C[w, w'] = sum_a |M(a, w') - a*w|``."""
    n = m.size
    lut = m.lut.astype(np.int64)  # [a, w']
    a = np.arange(n, dtype=np.int64)
    costs = np.empty((n, n), dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // (n * n))
    for lo in range(0, n, step):
        ws = np.arange(lo, min(n, lo + step), dtype=np.int64)
        target = np.multiply.outer(ws, a)  # [w, a]
        costs[lo:lo + ws.size] = np.abs(lut.T[None, :, :] - target[:, None, :]).sum(axis=2)
    return costs


def compute_weight_map(m: MultiplierModel) -> WeightMap:
    """Per-weight argmin of the summed absolute error.

    Ties keep the original code when it is among the minimisers, otherwise
    the smallest minimising code wins.
    """
    if m.bit_width > 12:
        raise NotImplementedError("weight tuning is limited to bit widths <= 12")
    costs = weight_costs(m)
    best = costs.argmin(axis=1)
    ids = np.arange(m.size)
    keep = costs[ids, ids] == costs[ids, best]
    best[keep] = ids[keep]
    return WeightMap(m.name, m.bit_width, best)


def tuned_med(m: MultiplierModel, wm: WeightMap) -> float:
    if wm.multiplier_name != m.name or wm.bit_width != m.bit_width:
        raise ValueError(f"weight map for {wm.multiplier_name!r} does not belong to multiplier {m.name!r}")
    exact = exact_products(m.bit_width)  # [a, w]
    approx = m.lut.astype(np.int64)[:, wm.entries]  # [a, map(w)]
    return int(np.abs(approx - exact).sum()) / exact.size


def apply_weight_map(weights: np.ndarray, wm: WeightMap) -> np.ndarray:
    weights = np.asarray(weights)
    if weights.size and int(weights.max()) >= wm.entries.size:
        raise ValueError("weight code outside the map's operand range")
    return wm.entries[weights].astype(weights.dtype)
