from typing import Callable, Iterable, List, Optional, TypeVar
import logging

from joblib import Parallel, cpu_count, delayed
from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def resolve_jobs(jobs: Optional[int]) -> int:
    """None means every available core"""
    if jobs is None or jobs < 0:
        return max(1, cpu_count())
    return jobs


def run_tasks(
    fn: Callable[[T], R],
    tasks: Iterable[T],
    jobs: Optional[int] = 1,
    progress: bool = False,
    desc: str = "tasks",
) -> List[R]:
    """
    Map `fn` over `tasks` on a worker pool, results in task order.

    Tasks must carry their own seeds; the outcome is then independent of
    `jobs`.
    """
    tasks = list(tasks)
    workers = resolve_jobs(jobs)
    logger.info("running %d %s on %d worker(s)", len(tasks), desc, workers)
    iterator = tqdm(tasks, desc=desc, disable=not progress)
    if workers == 1:
        return [fn(task) for task in iterator]
    return Parallel(n_jobs=workers)(delayed(fn)(task) for task in iterator)
