import logging
import queue
import threading

logger = logging.getLogger(__name__)


class BatchThread(threading.Thread):  # samples training batches ahead of the optimizer into a bounded queue
    def __init__(self, sampler, first_step, last_step, depth):
        super().__init__(daemon=True)
        self.sampler = sampler
        self.first_step = first_step
        self.last_step = last_step
        self.queue = queue.Queue(maxsize=max(1, depth))
        self.running = True

    def run(self):
        step = self.first_step
        while self.running and step <= self.last_step:
            try:
                item = (step, self.sampler.batch(step))
            except Exception as e:  # handed to the consumer, raised there
                item = (step, e)
            while self.running:
                try:
                    self.queue.put(item, timeout=0.1)
                    break
                except queue.Full:
                    continue
            if isinstance(item[1], Exception):
                break
            step += 1

    def next(self):  # (step, Batch) in step order
        step, batch = self.queue.get()
        if isinstance(batch, Exception):
            raise batch
        return step, batch

    def stop(self):
        self.running = False
        self.join()


class InlineBatches:  # same interface without a worker, for prefetch = 0
    def __init__(self, sampler, first_step, last_step):
        self.sampler = sampler
        self.step = first_step

    def start(self):
        pass

    def next(self):
        step, self.step = self.step, self.step + 1
        return step, self.sampler.batch(step)

    def stop(self):
        pass


def batch_source(sampler, first_step, last_step, depth):
    if depth <= 0:
        return InlineBatches(sampler, first_step, last_step)
    return BatchThread(sampler, first_step, last_step, depth)
