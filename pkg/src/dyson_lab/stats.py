import numpy as np

N_BLOCKS = 32


def block_means(x, n_blocks: int = N_BLOCKS) -> np.ndarray:
    """Means of ``n_blocks`` equal consecutive blocks (the remainder at the end is dropped)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < n_blocks:
        raise ValueError(f"need at least {n_blocks} samples for blocking, got {x.shape[0]}")
    m = x.shape[0] // n_blocks
    return x[: m * n_blocks].reshape(n_blocks, m, *x.shape[1:]).mean(axis=1)


def block_se(x, n_blocks: int = N_BLOCKS):
    """Standard error of the mean from the spread of block means."""
    b = block_means(x, n_blocks)
    return b.std(axis=0, ddof=1) / np.sqrt(n_blocks)


def block_std_se(x, n_blocks: int = N_BLOCKS) -> tuple[float, float]:
    """Sample standard deviation of ``x`` and its blocking standard error."""
    x = np.asarray(x, dtype=float)
    m = x.shape[0] // n_blocks
    stds = x[: m * n_blocks].reshape(n_blocks, m).std(axis=1, ddof=1)
    return float(x.std(ddof=1)), float(stds.std(ddof=1) / np.sqrt(n_blocks))
