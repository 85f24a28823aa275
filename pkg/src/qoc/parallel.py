import os
from concurrent.futures import ProcessPoolExecutor


def default_workers():
    return os.cpu_count() or 1


def map_ordered(fn, items, workers=1):
    """``[fn(*item) for item in items]``, optionally across worker processes.

    Output order always follows ``items`` so reductions are independent of the
    worker count.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(*item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        futures = [pool.submit(fn, *item) for item in items]
        return [f.result() for f in futures]


def _call_block(fn, args, size, seed, index):
    from qoc.streams import stream

    return fn(*args, size, stream(seed, index))


def run_blocks(fn, R, seed, args=(), workers=1, block=None):
    """Evaluate ``fn(*args, size, rng)`` over replicate blocks covering ``R``.

    Each block draws from the stream keyed by its index, so the output is the
    same for any worker count.  Returns the per-block results in order.
    """
    from qoc.streams import Q_BLOCK, blocks

    size = Q_BLOCK if block is None else block
    items = [(fn, args, stop - start, seed, b) for b, start, stop in blocks(R, size)]
    return map_ordered(_call_block, items, workers)
