"""Lightweight operation counters.

Used by tests to assert structural properties of the training path, e.g.
that one train step performs exactly one support-gradient evaluation and one
noise-predictor forward/backward regardless of the schedule length. Counters
are plain ints and are only meaningful when read from a single thread.
"""

from dataclasses import dataclass


@dataclass
class OpCounters:
    support_grad_evals: int = 0
    unet_forwards: int = 0
    unet_backwards: int = 0

    def reset(self) -> None:
        self.support_grad_evals = 0
        self.unet_forwards = 0
        self.unet_backwards = 0

    def snapshot(self) -> dict:
        return {
            "support_grad_evals": self.support_grad_evals,
            "unet_forwards": self.unet_forwards,
            "unet_backwards": self.unet_backwards,
        }


COUNTERS = OpCounters()
