"""Two interleaved spirals classified by a small tanh MLP.

The network is fixed at 2 -> 24 -> 24 -> 1 with tanh hidden activations and a
sigmoid output trained with binary cross-entropy. Gradients come from
hand-rolled reverse-mode backprop through this architecture; no framework.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..params import ParamVector, Rng
from .base import ProblemSpec

HIDDEN = 24
NOISE_STD = 0.02
R_INNER = 0.25
R_OUTER = 2.0


@dataclass(frozen=True)
class SpiralDataset:
    points: np.ndarray  # (n, 2)
    labels: np.ndarray  # (n,) in {0, 1}


def make_spirals(n: int = 1000, rotation_deg: float = 1200.0, seed: int = 0) -> SpiralDataset:
    """n points on two interleaved Archimedean spirals with Gaussian jitter."""
    rng = Rng(seed).derive("two_spirals")
    half = n // 2
    t = (np.arange(half) + 0.5) / half
    sweep = np.deg2rad(rotation_deg) * t
    radius = R_INNER + (R_OUTER - R_INNER) * t
    xs, ys, labels = [], [], []
    for cls in (0, 1):
        theta = sweep + np.pi * cls
        xs.append(radius * np.cos(theta))
        ys.append(radius * np.sin(theta))
        labels.append(np.full(half, cls, dtype=np.float64))
    pts = np.stack([np.concatenate(xs), np.concatenate(ys)], axis=1)
    pts = pts + rng.normal(pts.size, std=NOISE_STD).reshape(pts.shape)
    return SpiralDataset(points=pts, labels=np.concatenate(labels))


def _layer_sizes():
    return ((2, HIDDEN), (HIDDEN,), (HIDDEN, HIDDEN), (HIDDEN,), (HIDDEN, 1), (1,))


def two_spirals(n: int = 1000, rotation_deg: float = 1200.0, seed: int = 0):
    """Returns (dataset, ProblemSpec over the MLP weights)."""
    ds = make_spirals(n, rotation_deg, seed)
    x, y = ds.points, ds.labels
    n_pts = x.shape[0]
    sizes = _layer_sizes()
    names = ("W1", "b1", "W2", "b2", "W3", "b3")
    dim = sum(int(np.prod(s)) for s in sizes)

    def unpack(theta: ParamVector):
        return [theta.segment(name).reshape(shape) for name, shape in zip(names, sizes)]

    def loss_grad(theta: ParamVector):
        w1, b1, w2, b2, w3, b3 = unpack(theta)
        h1 = np.tanh(x @ w1 + b1)
        h2 = np.tanh(h1 @ w2 + b2)
        z = (h2 @ w3).ravel() + b3[0]
        # BCE with sigmoid output, stable form: mean(softplus(z) - y*z)
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        p = 1.0 / (1.0 + np.exp(-z))
        dz = ((p - y) / n_pts)[:, None]
        gw3 = h2.T @ dz
        gb3 = dz.sum(axis=0)
        da2 = (dz @ w3.T) * (1.0 - h2 * h2)
        gw2 = h1.T @ da2
        gb2 = da2.sum(axis=0)
        da1 = (da2 @ w2.T) * (1.0 - h1 * h1)
        gw1 = x.T @ da1
        gb1 = da1.sum(axis=0)
        grads = (gw1, gb1, gw2, gb2, gw3, gb3)
        return loss, ParamVector.from_arrays(list(zip(names, grads)))

    def accuracy(theta: ParamVector) -> float:
        w1, b1, w2, b2, w3, b3 = unpack(theta)
        h2 = np.tanh(np.tanh(x @ w1 + b1) @ w2 + b2)
        z = (h2 @ w3).ravel() + b3[0]
        return float(np.mean((z >= 0.0) == (y == 1.0)))

    def init(init_rng: Rng) -> ParamVector:
        # Xavier-style scaling for the tanh layers, zero biases
        parts = []
        for name, shape in zip(names, sizes):
            if len(shape) == 2:
                fan_in = shape[0]
                parts.append((name, init_rng.normal(int(np.prod(shape)), std=fan_in ** -0.5)))
            else:
                parts.append((name, np.zeros(shape)))
        return ParamVector.from_arrays(parts)

    spec = ProblemSpec(
        name="two_spirals",
        dim=dim,
        init=init,
        loss_grad=loss_grad,
        test_metric=accuracy,
        metric_name="train_accuracy",
        metric_kind="accuracy",
        metadata={"n": n, "rotation_deg": rotation_deg, "seed": seed, "dataset": ds},
    )
    return ds, spec
