"""Layer stack with augmentation tap positions and reverse-mode gradients."""

import copy

import numpy as np

from ..errors import ShapeError, StateError, TapRangeError
from .losses import check_soft_labels, cross_entropy


class Network:
    """Ordered layers plus tap positions P0..P(K-1) where augmentation may inject.

    A tap index k marks the activation entering ``layers[taps[k]]``; tap 0 is
    always the input. Parameters flatten to a single vector in declaration
    order, which fixes the FlatGrad layout for a given topology.
    """

    def __init__(self, layers, taps):
        if not layers:
            raise ShapeError("network needs at least one layer")
        taps = list(taps)
        if not taps or taps[0] != 0:
            raise TapRangeError("tap 0 must mark the network input (layer index 0)")
        if any(b <= a for a, b in zip(taps, taps[1:])):
            raise TapRangeError(f"tap indices must be strictly increasing, got {taps}")
        if taps[-1] >= len(layers):
            raise TapRangeError(f"tap index {taps[-1]} beyond last layer {len(layers) - 1}")
        self.layers = layers
        self.taps = taps
        self._forward_ready = False

    @property
    def num_taps(self):
        return len(self.taps)

    # ---- parameter plumbing -------------------------------------------------

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name, p in layer.param_items():
                yield f"layer{i}.{name}", p

    def num_params(self):
        return sum(p.size for _, p in self.named_params())

    def param_vector(self):
        parts = [p.ravel() for _, p in self.named_params()]
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)

    def set_param_vector(self, vec):
        vec = np.asarray(vec)
        if vec.size != self.num_params():
            raise ShapeError(f"expected {self.num_params()} params, got {vec.size}")
        offset = 0
        for _, p in self.named_params():
            p[:] = vec[offset : offset + p.size].reshape(p.shape)
            offset += p.size

    def grad_vector(self):
        parts = []
        for layer in self.layers:
            for _, g in layer.grad_items():
                parts.append(g.ravel().copy())
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grad()

    def clone(self):
        self._forward_ready = False
        return copy.deepcopy(self)

    # ---- forward / backward -------------------------------------------------

    def predict(self, x):
        """Plain forward pass; returns (batch, classes) logits."""
        cur = np.asarray(x)
        for layer in self.layers:
            cur = layer.forward(cur)
        return cur.reshape(cur.shape[0], -1)

    def forward_with_tap(self, x, labels, tap=None, aug=None, rng=None):
        """Forward pass with one optional augmentation injected at tap ``tap``.

        Returns (logits, loss, mixed_labels). With aug=None (or kind "none")
        or tap=None the result is bitwise identical to a tapless pass.
        """
        from ..augment import apply_at_position  # deferred: augment needs engine.losses

        x = np.asarray(x)
        labels = check_soft_labels(labels)
        if x.ndim != 4:
            raise ShapeError(f"input must be rank-4 (B,C,H,W), got shape {x.shape}")
        if x.shape[0] != labels.shape[0]:
            raise ShapeError(f"batch mismatch: input {x.shape[0]} vs labels {labels.shape[0]}")
        apply_aug = tap is not None and aug is not None and aug.kind != "none"
        if tap is not None and not (0 <= tap < self.num_taps):
            raise TapRangeError(f"tap {tap} out of range for {self.num_taps} positions")

        tap_layer = self.taps[tap] if apply_aug else -1
        aug_grad_fn = None
        cur = x
        cur_labels = labels
        for i, layer in enumerate(self.layers):
            if apply_aug and i == tap_layer:
                outcome = apply_at_position(aug, cur, cur_labels, rng, position=tap)
                cur = outcome.tensor
                cur_labels = outcome.labels
                aug_grad_fn = outcome.grad_fn
            cur = layer.forward(cur)

        logits = cur.reshape(cur.shape[0], -1)
        loss, dlogits = cross_entropy(logits, cur_labels)
        self._dlogits = dlogits
        self._logits_shape = cur.shape
        self._tap_layer = tap_layer if apply_aug else -1
        self._aug_grad_fn = aug_grad_fn
        self._forward_ready = True
        return logits, loss, cur_labels

    def backward(self):
        """Reverse pass for the last forward_with_tap; returns the flat gradient."""
        if not self._forward_ready:
            raise StateError("backward called before forward_with_tap")
        self.zero_grads()
        g = self._dlogits.reshape(self._logits_shape)
        for i in range(len(self.layers) - 1, -1, -1):
            g = self.layers[i].backward(g)
            if i == self._tap_layer and self._aug_grad_fn is not None:
                g = self._aug_grad_fn(g)
        self._forward_ready = False
        return self.grad_vector()


def forward_with_tap(net, x, labels, tap=None, aug=None, rng=None):
    return net.forward_with_tap(x, labels, tap=tap, aug=aug, rng=rng)


def backward(net):
    return net.backward()


def finite_diff_grad(net, x, labels, eps=1e-5, tap=None, aug=None, rng_seed=None):
    """Central-difference gradient oracle over all parameters (64-bit only).

    When an augmentation is supplied, every loss evaluation re-seeds its rng
    from ``rng_seed`` so the stochastic pass is held fixed.
    """

    def loss_at(vec):
        net.set_param_vector(vec)
        rng = np.random.default_rng(rng_seed) if rng_seed is not None else None
        _, loss, _ = net.forward_with_tap(x, labels, tap=tap, aug=aug, rng=rng)
        return loss

    theta = net.param_vector()
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        bump = np.zeros_like(theta)
        bump[i] = eps
        grad[i] = (loss_at(theta + bump) - loss_at(theta - bump)) / (2 * eps)
    net.set_param_vector(theta)
    return grad
