import concurrent.futures
import logging
import os
from collections.abc import Callable, Sequence
from typing import Any

from tqdm import tqdm

logger = logging.getLogger(__name__)


def parallel_map(
    fn: Callable[[Any], Any],
    items: Sequence[Any],
    workers: int = int(os.environ.get("MTASEP_WORKERS", 1)),
    desc: str = "Configurations",
    progress: bool = True,
) -> list[Any]:
    """
    Apply fn to every item and return the results in input order.
    A progress bar is displayed and logs written.

    Args:
        fn: A picklable callable (module level function or functools.partial).
        items: The inputs.
        workers: The number of worker processes. If 1, the items are processed
            sequentially in this process, which also keeps memoization caches
            warm. If > 1, a concurrent.futures.ProcessPoolExecutor is used.
        desc: Label of the progress bar.
        progress: If False, no progress bar is shown, e.g. when nested in
            another parallel_map.

    Returns:
        List of results.
    """
    if len(items) == 0:
        return []

    assert workers > 0, "Workers must be greater than 0"

    if len(items) < workers:
        # It doesn't make sense to use more workers than items
        workers = len(items)
        logger.debug(f"More workers than items. Reducing workers to {workers}")

    if workers == 1:
        logger.debug(f"Processing {len(items)} item(s) sequentially")
        bar = tqdm(items, desc=desc, leave=False, disable=not progress)
        return [fn(item) for item in bar]

    logger.info(f"Processing {len(items)} item(s) in parallel using {workers} workers")

    chunksize = max(1, len(items) // (4 * workers))
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
        results = list(
            tqdm(
                executor.map(fn, items, chunksize=chunksize),
                total=len(items),
                desc=desc,
                leave=False,
                disable=not progress,
            )
        )

    return results
