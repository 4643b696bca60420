"""SGD with classical momentum, updating model weights in place."""

import numpy as np

from .errors import ConfigError
from .graph import ModelGraph
from .layers import LEARNED_WEIGHT_NAMES


class SGD:
    """velocity <- momentum * velocity + grad;  w <- w - lr * velocity."""

    def __init__(self, lr: float, momentum: float = 0.0):
        if lr < 0:
            raise ConfigError(f"learning rate must be non-negative, got {lr}")
        self.lr = lr
        self.momentum = momentum
        self._velocity = {}

    def step(self, model: ModelGraph, grads: dict):
        for node in model.nodes:
            g = grads.get(node.id)
            if not g:
                continue
            for name in LEARNED_WEIGHT_NAMES:
                if name not in g or name not in node.weights:
                    continue
                key = (node.id, name)
                if self.momentum:
                    v = self._velocity.get(key)
                    v = g[name] if v is None else self.momentum * v + g[name]
                    self._velocity[key] = v
                else:
                    v = g[name]
                node.weights[name] -= (self.lr * v).astype(np.float32)


def sgd_step(model: ModelGraph, grads: dict, lr: float, momentum: float = 0.0,
             state: SGD | None = None) -> SGD:
    """One-shot helper around SGD; pass the returned state back for momentum."""
    opt = state or SGD(lr, momentum)
    opt.lr = lr
    opt.step(model, grads)
    return opt
