import numpy as np


def derive_seed(root: int, *keys: int) -> int:
    """Child seed for an independent sub-task, fixed by ``(root, *keys)`` alone."""
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
