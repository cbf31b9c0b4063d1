"""Shared helpers for the golden-value oracles.

Everything here is written from the published formulas with plain loops so it
shares no code path with the C++ implementation.
"""

import math

import numpy as np

MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & MASK64
    return h


def splitmix64(state: int):
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        yield z ^ (z >> 31)


def stub_embed(label: str, dim: int) -> np.ndarray:
    gen = splitmix64(fnv1a64(label.encode("utf-8")))
    raw = [((next(gen) >> 11) * 2.0**-52) * 2.0 - 1.0 for _ in range(dim)]
    norm = math.sqrt(sum(x * x for x in raw))
    # cast through float32 exactly like a stored embedding
    return np.array([x / norm for x in raw], dtype=np.float32).astype(np.float64)


def formula_param(name: str, rows: int, cols: int) -> np.ndarray:
    """Deterministic parameter values mirrored in tests/test_util.hpp."""
    k = sum(name.encode("utf-8")) % 97
    out = np.empty((rows, cols))
    for r in range(rows):
        for c in range(cols):
            flat = r * cols + c
            v = 0.5 * math.sin(0.7 * flat + 0.13 * k + 0.2)
            if name.endswith("gamma"):
                v += 1.0
            out[r, c] = v
    return out


def formula_h(rows: int, cols: int) -> np.ndarray:
    return np.array([[0.8 * math.cos(0.5 * t + 0.9 * j + 0.3) for j in range(cols)] for t in range(rows)])


def leaky(x, slope=0.2):
    return x if x > 0 else slope * x


def elu(x):
    return x if x > 0 else math.expm1(x)


def layer_norm(row, gamma, beta, eps=1e-5):
    mu = sum(row) / len(row)
    var = sum((x - mu) ** 2 for x in row) / len(row)
    return [(x - mu) / math.sqrt(var + eps) * g + b for x, g, b in zip(row, gamma, beta)]


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def fmt(x: float) -> str:
    return repr(float(x))
