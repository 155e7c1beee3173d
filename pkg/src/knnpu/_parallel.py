import os
from concurrent.futures import ThreadPoolExecutor


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("PU_WORKERS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items, n_jobs: int = 1) -> list:
    """Order-preserving map; results never depend on ``n_jobs``."""
    items = list(items)
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))
