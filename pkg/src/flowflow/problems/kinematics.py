"""Planar inverse kinematics over a trajectory of waypoints.

An n-link arm with unit link lengths reaches toward one target per waypoint;
a smoothness penalty couples consecutive joint configurations. End-effector
position is a sum of cosines/sines of cumulative joint angles, so the
parameter coupling is trigonometric rather than bilinear.
"""

from __future__ import annotations

import numpy as np

from ..params import ParamVector, Rng
from .base import ProblemSpec


def inverse_kinematics(n_links: int = 8, n_waypoints: int = 10,
                       smooth_weight: float = 1.0, seed: int = 0) -> ProblemSpec:
    data_rng = Rng(seed).derive("inverse_kinematics")
    # reachable targets: radius well inside the arm's span, frontal half-plane
    radius = 2.0 + 4.0 * data_rng.uniform(n_waypoints)
    angle = -0.5 * np.pi + np.pi * data_rng.uniform(n_waypoints)
    targets = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)

    dim = n_waypoints * n_links

    def forward(angles: np.ndarray) -> np.ndarray:
        """End-effector positions, one row per waypoint."""
        psi = np.cumsum(angles, axis=1)
        return np.stack([np.cos(psi).sum(axis=1), np.sin(psi).sum(axis=1)], axis=1)

    def loss_grad(theta: ParamVector):
        phi = theta.data.reshape(n_waypoints, n_links)
        psi = np.cumsum(phi, axis=1)
        c, s = np.cos(psi), np.sin(psi)
        pos = np.stack([c.sum(axis=1), s.sum(axis=1)], axis=1)
        resid = pos - targets
        dphi = np.diff(phi, axis=0)
        loss = float(np.dot(resid.ravel(), resid.ravel())
                     + smooth_weight * np.dot(dphi.ravel(), dphi.ravel()))
        # d pos_x / d phi_k = -sum_{j>=k} sin(psi_j), d pos_y / d phi_k likewise with cos
        s_tail = np.cumsum(s[:, ::-1], axis=1)[:, ::-1]
        c_tail = np.cumsum(c[:, ::-1], axis=1)[:, ::-1]
        grad = 2.0 * (-resid[:, :1] * s_tail + resid[:, 1:] * c_tail)
        grad[:-1] -= 2.0 * smooth_weight * dphi
        grad[1:] += 2.0 * smooth_weight * dphi
        return loss, theta.with_data(grad.ravel())

    def target_rmse(theta: ParamVector) -> float:
        phi = theta.data.reshape(n_waypoints, n_links)
        resid = forward(phi) - targets
        return float(np.sqrt(np.mean(np.sum(resid * resid, axis=1))))

    def init(init_rng: Rng) -> ParamVector:
        return ParamVector(init_rng.normal(dim, std=0.1))

    return ProblemSpec(
        name="inverse_kinematics",
        dim=dim,
        init=init,
        loss_grad=loss_grad,
        test_metric=target_rmse,
        metric_name="target_rmse",
        metric_kind="rmse",
        metadata={"n_links": n_links, "n_waypoints": n_waypoints,
                  "smooth_weight": smooth_weight, "seed": seed, "targets": targets},
    )
