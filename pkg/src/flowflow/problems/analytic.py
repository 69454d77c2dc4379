"""Closed-form test objectives: Rosenbrock and a rotated ill-conditioned quadratic."""

from __future__ import annotations

import numpy as np

from ..params import ParamVector, Rng, gaussian_fill
from .base import ProblemSpec


def rosenbrock() -> ProblemSpec:
    """f(x, y) = (1-x)^2 + 100 (y - x^2)^2, started at (-1.5, 1.5).

    The curved valley makes the descent direction rotate continuously, which
    is what the ODE trigger is supposed to pick up.
    """

    def loss_grad(theta: ParamVector):
        x, y = theta.data
        d = y - x * x
        loss = (1.0 - x) ** 2 + 100.0 * d * d
        gx = -2.0 * (1.0 - x) - 400.0 * x * d
        gy = 200.0 * d
        return float(loss), theta.with_data(np.array([gx, gy]))

    def init(_rng: Rng) -> ParamVector:
        return ParamVector(np.array([-1.5, 1.5]))

    return ProblemSpec(
        name="rosenbrock",
        dim=2,
        init=init,
        loss_grad=loss_grad,
        metric_name="final_train_loss",
        metric_kind="loss",
        metadata={"start": (-1.5, 1.5)},
    )


def stiff_valley(dim: int = 50, cond: float = 2000.0, seed: int = 0) -> ProblemSpec:
    """Quadratic 0.5 * theta' H theta with H = Q diag(cond, cond, 1, ..., 1) Q'.

    Q is a seeded random orthogonal matrix (QR of a Gaussian matrix with the
    sign of R's diagonal fixed), so the two stiff directions are rotated away
    from the coordinate axes and a diagonal preconditioner cannot see them.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    rng = Rng(seed).derive("stiff_valley")
    gauss = rng.normal(dim * dim).reshape(dim, dim)
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))
    eigs = np.ones(dim)
    eigs[:2] = cond
    h = (q * eigs) @ q.T
    h = 0.5 * (h + h.T)  # kill rounding asymmetry

    def loss_grad(theta: ParamVector):
        g = h @ theta.data
        return float(0.5 * np.dot(theta.data, g)), theta.with_data(g)

    def init(init_rng: Rng) -> ParamVector:
        return gaussian_fill(init_rng, dim)

    return ProblemSpec(
        name="stiff_valley",
        dim=dim,
        init=init,
        loss_grad=loss_grad,
        metric_name="final_train_loss",
        metric_kind="loss",
        metadata={"dim": dim, "cond": cond, "seed": seed, "hessian": h},
    )
