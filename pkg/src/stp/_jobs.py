"""Order-preserving sharded map used by stages that declare record-wise purity."""

from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, items, jobs=1, chunksize=256):
    items = list(items)
    if jobs <= 1 or len(items) < 2 * chunksize:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
