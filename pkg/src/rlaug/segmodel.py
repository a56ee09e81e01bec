"""Small U-Net used as the substitute segmentation network and the state encoder.

One pooling level: two 3x3 conv-ReLU blocks at full resolution, max-pool, two
more at half resolution (the bottleneck), nearest upsampling, concatenation
with the full-resolution features, two conv-ReLU blocks, a 1x1 conv and a
sigmoid. The bottleneck's per-channel mean is the agent's state vector.
"""
import numpy as np

from . import nnet
from .errors import ContractViolation

SOFT_DICE_EPS = 1.0


class SegModel:
    def __init__(self, widths=(8, 16), seed=0, dtype=np.float32):
        c1, c2 = widths
        self.widths = (int(c1), int(c2))
        self.enc1 = [nnet.conv3x3("enc1a", 1, c1), nnet.RELU,
                     nnet.conv3x3("enc1b", c1, c1), nnet.RELU]
        self.enc2 = [nnet.MAXPOOL2, nnet.conv3x3("enc2a", c1, c2), nnet.RELU,
                     nnet.conv3x3("enc2b", c2, c2), nnet.RELU]
        self.up = [nnet.UPSAMPLE2]
        self.dec = [nnet.conv3x3("dec1a", c2 + c1, c1), nnet.RELU,
                    nnet.conv3x3("dec1b", c1, c1), nnet.RELU,
                    nnet.conv1x1("head", c1, 1), nnet.SIGMOID]
        self.params = nnet.init_params(self.enc1 + self.enc2 + self.dec, seed, dtype)

    @property
    def state_dim(self):
        return self.widths[1]

    def param_count(self):
        return self.params.count()

    def copy(self):
        clone = SegModel.__new__(SegModel)
        clone.__dict__.update(self.__dict__)
        clone.params = self.params.copy()
        return clone

    def state(self):
        return self.params.state()

    def load_state(self, state):
        self.params.load_state(state)

    def forward(self, x, record=True):
        """x: (N, 1, H, W). Returns (probabilities (N, 1, H, W), cache)."""
        x = np.asarray(x)
        if x.ndim != 4 or x.shape[1] != 1:
            raise ContractViolation(f"expected (N, 1, H, W) input, got {x.shape}")
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ContractViolation(f"spatial size {x.shape[2:]} must be even")
        h1, c_e1 = nnet.forward(self.enc1, self.params, x, record)
        h2, c_e2 = nnet.forward(self.enc2, self.params, h1, record)
        u, c_up = nnet.forward(self.up, self.params, h2, record)
        out, c_dec = nnet.forward(self.dec, self.params, np.concatenate([u, h1], axis=1), record)
        cache = (c_e1, c_e2, c_up, c_dec) if record else None
        return out, cache

    def backward(self, cache, grad_out):
        c_e1, c_e2, c_up, c_dec = cache
        c2 = self.widths[1]
        g_cat = nnet.backward(c_dec, grad_out)
        g_h2 = nnet.backward(c_up, g_cat[:, :c2])
        g_h1 = nnet.backward(c_e2, g_h2) + g_cat[:, c2:]
        return nnet.backward(c_e1, g_h1)

    def bottleneck(self, x):
        h1, _ = nnet.forward(self.enc1, self.params, x, record=False)
        h2, _ = nnet.forward(self.enc2, self.params, h1, record=False)
        return h2


def _as_batch(images):
    x = np.asarray(images, dtype=np.float32)
    if x.ndim == 2:
        x = x[None]
    return x[:, None]


def soft_dice_loss(probs, target):
    """1 - (2*sum(p*y) + 1) / (sum(p) + sum(y) + 1) and its gradient w.r.t. ``probs``."""
    p = np.asarray(probs)
    y = np.asarray(target, dtype=p.dtype)
    if p.shape != y.shape:
        raise ContractViolation(f"probability shape {p.shape} != target shape {y.shape}")
    inter = float((p * y).sum())
    denom = float(p.sum() + y.sum()) + SOFT_DICE_EPS
    num = 2.0 * inter + SOFT_DICE_EPS
    loss = 1.0 - num / denom
    grad = -(2.0 * y * denom - num) / (denom * denom)
    return loss, grad.astype(p.dtype, copy=False)


def batch_soft_dice(probs, targets):
    """Mean per-sample soft-Dice loss over a batch, with gradient."""
    n = probs.shape[0]
    total = 0.0
    grad = np.empty_like(probs)
    for i in range(n):
        loss, g = soft_dice_loss(probs[i], targets[i])
        total += loss
        grad[i] = g / n
    return total / n, grad


def _train_step(model, x, y, lr, weight_decay):
    probs, cache = model.forward(x)
    loss, grad = batch_soft_dice(probs, y)
    model.backward(cache, grad)
    nnet.adam_step(model.params, lr, weight_decay=weight_decay)
    return loss


def pretrain(model, train, epochs, base_lr=2.5e-4, seed=0, batch_size=2, weight_decay=5e-4):
    """Train on ``train`` (sequence of (image, mask)) with poly LR decay.

    Mutates and returns ``model``; per-epoch mean losses land in ``model.history``.
    """
    if len(train) == 0:
        raise ContractViolation("pretrain needs a non-empty training set")
    images = _as_batch([im for im, _ in train])
    masks = _as_batch([m for _, m in train])
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        lr = nnet.poly_lr(base_lr, epoch, epochs)
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            losses.append(_train_step(model, images[idx], masks[idx], lr, weight_decay))
        history.append(float(np.mean(losses)))
    model.history = history
    return model


def finetune(model, sample, steps=2, lr=5e-5, weight_decay=5e-4, replay=None):
    """``steps`` Adam updates on one (image, mask) pair; mutates and returns ``model``.

    ``replay``, if given, is a callable returning an original (image, mask)
    that joins each update's batch (the anti-forgetting switch).
    """
    if steps < 1:
        raise ContractViolation(f"finetune needs steps >= 1, got {steps}")
    image, mask = sample
    for _ in range(steps):
        if replay is None:
            x, y = _as_batch(image), _as_batch(mask)
        else:
            r_img, r_mask = replay()
            x, y = _as_batch([image, r_img]), _as_batch([mask, r_mask])
        _train_step(model, x, y, lr, weight_decay)
    return model


def predict_proba(model, images):
    probs, _ = model.forward(_as_batch(images), record=False)
    return probs[:, 0]


def predict(model, image, threshold=0.5):
    """Binary mask: probability >= threshold is foreground."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ContractViolation(f"predict takes one 2-D image, got {image.shape}")
    return (predict_proba(model, image)[0] >= threshold).astype(np.uint8)


def predict_batch(model, images, threshold=0.5):
    return (predict_proba(model, images) >= threshold).astype(np.uint8)


def extract_state(model, image):
    """Per-channel mean of the bottleneck activations (float64 vector)."""
    h2 = model.bottleneck(_as_batch(image))
    return h2.mean(axis=(2, 3))[0].astype(np.float64)


def sample_loss(model, image, mask):
    probs = predict_proba(model, image)[0]
    return soft_dice_loss(probs, np.asarray(mask, dtype=probs.dtype))[0]
