"""
Minibatch iteration over a Dataset.
"""
import numpy as np
from apiae import helpers


class BatchIterator(object):
    def __init__(self, dataset, batch_size, shuffle=True, seed=0, epoch=0):
        """
        Yield (indices, frames) minibatches covering `dataset` once.

        The order for a given (seed, epoch) is always the same.  The final
        batch may be smaller than `batch_size`.

        `current_batch` and `current_batch_number` are set on every
        iteration, which helps report exactly which batch caused a problem.
        """
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.dataset = dataset
        self.batch_size = int(batch_size)
        self.shuffle = shuffle
        self.seed = seed
        self.epoch = epoch
        self.current_batch = None
        self.current_batch_number = None

    def __len__(self):
        return -(-len(self.dataset) // self.batch_size)

    def order(self):
        n = len(self.dataset)
        if not self.shuffle:
            return np.arange(n)
        return helpers.rng_for(self.seed, self.epoch, 7).permutation(n)

    def __iter__(self):
        order = self.order()
        for i, start in enumerate(range(0, len(order), self.batch_size)):
            indices = order[start : start + self.batch_size]
            self.current_batch = indices
            self.current_batch_number = i
            yield indices, self.dataset.frames[indices]
