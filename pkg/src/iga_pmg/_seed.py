import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(n, seed):
    """First ``n`` outputs of the splitmix64 generator started at ``seed``."""
    with np.errstate(over="ignore"):
        state = np.uint64(seed % 2**64) + _GOLDEN * np.arange(1, n + 1, dtype=np.uint64)
        z = state
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def seeded_initial_guess(n, seed=42):
    """Deterministic vector with entries uniform on [-1, 1).

    Each splitmix64 output ``z`` maps to ``(z >> 11) * 2**-53 * 2 - 1``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    z = splitmix64(int(n), int(seed))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53 * 2.0 - 1.0
