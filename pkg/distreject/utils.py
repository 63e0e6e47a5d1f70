import hashlib
import json
import math
from typing import List, Tuple

MASK64 = (1 << 64) - 1


def calculate_hash(data: bytes) -> str:
    """Calculates the SHA-256 hash of binary data."""
    return hashlib.sha256(data).hexdigest()


def canonical_json(payload) -> str:
    """Key-sorted compact JSON, the byte form every manifest hash is taken over."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(base: int, *streams: int) -> int:
    """Mix a base seed with stream indices into an independent 64-bit seed."""
    seed = _splitmix64(base & MASK64)
    for stream in streams:
        seed = _splitmix64(seed ^ (stream & MASK64))
    return seed


def parse_grid(text: str) -> List[float]:
    """Parse ``start:stop:step`` ranges (stop inclusive) and comma lists.

    >>> parse_grid("0:0.3:0.1")
    [0.0, 0.1, 0.2, 0.3]
    >>> parse_grid("0.05,0.5")
    [0.05, 0.5]
    """
    values: List[float] = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            raise ValueError(f"empty grid entry in {text!r}")
        if ":" in item:
            parts = item.split(":")
            if len(parts) != 3:
                raise ValueError(f"range {item!r} must read start:stop:step")
            start, stop, step = (float(p) for p in parts)
            if step <= 0 or stop < start:
                raise ValueError(f"range {item!r} needs step > 0 and stop >= start")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values.extend(round(start + i * step, 12) for i in range(count))
        else:
            values.append(float(item))
    if any(not math.isfinite(v) for v in values):
        raise ValueError(f"non-finite value in grid {text!r}")
    return values


def parse_int_grid(text: str) -> List[int]:
    values = parse_grid(text)
    if any(v != int(v) for v in values):
        raise ValueError(f"grid {text!r} must contain integers")
    return [int(v) for v in values]


def parse_discrete_spec(text: str) -> Tuple[List[float], List[float]]:
    """Parse ``"value:weight,value:weight"`` into two lists."""
    values, weights = [], []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 2:
            raise ValueError(f"atom {item!r} must read value:weight")
        values.append(float(parts[0]))
        weights.append(float(parts[1]))
    return values, weights


def parse_gaussian_spec(text: str) -> Tuple[float, float]:
    """Parse ``"mean,stddev"``."""
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"gaussian {text!r} must read mean,stddev")
    return float(parts[0]), float(parts[1])
