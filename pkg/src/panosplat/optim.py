"""First-order adaptive-moment optimizer over named parameter groups."""

import numpy as np


class Adam:
    """Adam with per-group learning rates and non-finite gradient skipping.

    Learning rates may be scalars or arrays broadcastable to the parameter
    shape (used to give SH DC and higher bands different rates). Elements
    with non-finite gradients are left untouched and counted.
    """

    def __init__(self, params, lrs, beta1=0.9, beta2=0.999, eps=1e-15):
        self.lrs = dict(lrs)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.skipped = 0

    def step(self, params, grads, lr_scale=None):
        """Update params in place; returns the non-finite elements skipped."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        skipped = 0
        for name, p in params.items():
            g = grads[name]
            finite = np.isfinite(g)
            n_bad = p.size - int(finite.sum())
            if n_bad:
                skipped += n_bad
                g = np.where(finite, g, 0.0)
            m = self.m[name]
            v = self.v[name]
            np.multiply(m, self.beta1, out=m)
            m += (1.0 - self.beta1) * g
            np.multiply(v, self.beta2, out=v)
            v += (1.0 - self.beta2) * (g * g)
            lr = self.lrs[name]
            if lr_scale and name in lr_scale:
                lr = lr * lr_scale[name]
            update = lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if n_bad:
                update = np.where(finite, update, 0.0)
            p -= update
        self.skipped += skipped
        return skipped

    def append_zeros(self, n_new):
        """Grow every state array by n_new zero rows (densification)."""
        for d in (self.m, self.v):
            for name, arr in d.items():
                d[name] = np.concatenate(
                    [arr, np.zeros((n_new,) + arr.shape[1:])])

    def select(self, index):
        """Keep only the given rows of every state array (pruning)."""
        for d in (self.m, self.v):
            for name, arr in d.items():
                d[name] = arr[index]

    def reset_group(self, name):
        self.m[name][:] = 0.0
        self.v[name][:] = 0.0
