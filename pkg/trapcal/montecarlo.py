from abc import abstractmethod
import logging
from typing import Generic, List, Sequence, TypeVar
import zlib

from joblib import Parallel, cpu_count, delayed
import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")


def stream_id(name: str) -> int:
    """Stable integer id of a named stream"""
    return zlib.crc32(name.encode("utf-8"))


def trial_rng(seed: int, stream: str, index: int) -> np.random.Generator:
    """
    Counter-based generator for one trial

    The stream depends only on (seed, stream name, trial index), so a trial draws
    the same numbers whichever worker runs it.
    """
    sequence = np.random.SeedSequence([int(seed), stream_id(stream), int(index)])
    return np.random.Generator(np.random.Philox(sequence))


class MonteCarlo(Generic[T]):
    """
    Abstract Base Class for batches of independent random trials.

    Must implement the abstract ``trial`` method, and concrete ``__init__``
    methods should call ``super().__init__(random_seed, stream)``.

    Takes a generic type parameter of the value each trial returns, for type
    hints. Usage: ::

        class MyTrials(MonteCarlo[float]):
            def trial(self, rng, index):
                return rng.normal()

        errors = MyTrials(random_seed=7)(n_trials=1000, n_jobs=4)
    """

    def __init__(self, random_seed: int = 42, stream: str = "trials"):
        """
        :param random_seed: Master seed
        :param stream: Name separating this batch's random streams from others
            run with the same master seed
        """
        self.random_seed = random_seed
        self.stream = stream
        self.next_index = 0

    def set_seed(self, seed: int = 42) -> None:
        """
        Set the master seed and restart trial numbering, so that the next call
        reproduces the first one made with this seed.

        :param seed: The random seed to use
        """
        self.random_seed = seed
        self.next_index = 0

    @abstractmethod
    def trial(self, rng: np.random.Generator, index: int) -> T:
        """
        Run one trial

        :param rng: Generator private to this trial
        :param index: Global trial index
        :return: The trial's result
        """
        pass

    def _trial(self, index: int) -> T:
        return self.trial(trial_rng(self.random_seed, self.stream, index), index)

    def _trials(self, indices: Sequence[int]) -> List[T]:
        return [self._trial(index) for index in indices]

    def __call__(self, n_trials: int, n_jobs: int = 1, verbosity: int = 0) -> List[T]:
        """
        Run ``n_trials`` trials and return their results in trial order

        Trials are run in parallel using ``n_jobs`` Joblib jobs with the loky
        backend. If ``n_jobs`` is 1, Joblib is not used. Each trial draws from its
        own counter-based stream, so results do not depend on ``n_jobs``.
        Successive calls continue the trial numbering and so give fresh trials;
        call ``set_seed()`` to start over.

        :param n_trials: Number of trials to run
        :param n_jobs: Number of joblib jobs to use
        :param verbosity: Joblib Parallel verbosity. If nonzero, print progress
            updates.
        :return: List of trial results
        """
        if n_trials < 0:
            raise ValueError(f"n_trials must be non-negative, got {n_trials}")

        indices = range(self.next_index, self.next_index + n_trials)
        self.next_index += n_trials

        if n_jobs == 1 or n_trials < 2:
            # Bypass joblib entirely for a single job, no pickling needed
            return self._trials(indices)

        n_workers = n_jobs if n_jobs > 0 else cpu_count()
        n_chunks = min(n_trials, 4 * n_workers)
        chunks = np.array_split(np.arange(indices.start, indices.stop), n_chunks)
        logger.debug(
            "Running %d trials of stream '%s' in %d chunks",
            n_trials,
            self.stream,
            len(chunks),
        )
        with Parallel(n_jobs=n_jobs, backend="loky", verbose=verbosity) as parallel:
            chunked = parallel(
                delayed(self._trials)(chunk.tolist()) for chunk in chunks if len(chunk)
            )
        return [result for chunk in chunked for result in chunk]
