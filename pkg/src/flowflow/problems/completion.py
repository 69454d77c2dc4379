"""Low-rank recovery benchmarks: matrix completion, CP tensor completion,
and Huber-loss robust matrix factorization.

Ground truth is synthetic. Factor entries are drawn with variance chosen so
the reconstructed signal has unit variance regardless of rank (1/sqrt(r) per
factor for matrices, r^(-1/3) for third-order tensors). Held-out evaluation
is RMSE on the cells outside the observation mask, measured against the known
clean ground truth.
"""

from __future__ import annotations

import numpy as np

from ..params import ParamVector, Rng
from .base import CompletionScenario, ProblemSpec

# Shapes, ranks, and observation fractions follow the benchmark protocol;
# signal scale, spectrum decay, observation noise, and init scale are
# generation details chosen so the tasks converge and overfit on the
# published step horizons (harder scenarios carry more noise).
MATRIX_SCENARIOS = {
    "small": CompletionScenario("small", (200, 300), 10, 0.30, signal_std=0.36,
                                spectrum_decay=0.6, noise_std=0.20, init_std=0.05),
    "medium": CompletionScenario("medium", (300, 400), 15, 0.20, signal_std=0.36,
                                 spectrum_decay=0.6, noise_std=0.18, init_std=0.05),
    "larger": CompletionScenario("larger", (400, 500), 20, 0.15, signal_std=0.36,
                                 spectrum_decay=0.6, noise_std=0.24, init_std=0.05),
}

TENSOR_SCENARIOS = {
    "small": CompletionScenario("small", (30, 40, 50), 5, 0.10, signal_std=0.36,
                                spectrum_decay=0.6, noise_std=0.25, init_std=0.12),
    "medium": CompletionScenario("medium", (40, 50, 60), 8, 0.08, signal_std=0.36,
                                 spectrum_decay=0.6, noise_std=0.25, init_std=0.12),
    "larger": CompletionScenario("larger", (50, 60, 70), 10, 0.08, signal_std=0.36,
                                 spectrum_decay=0.6, noise_std=0.25, init_std=0.12),
}

ROBUST_SCENARIOS = {
    "small": CompletionScenario("small", (60, 80), 5, 1.0, outlier_fraction=0.20,
                                signal_std=0.36, spectrum_decay=0.6, init_std=0.05),
    "medium": CompletionScenario("medium", (80, 100), 8, 1.0, outlier_fraction=0.20,
                                 signal_std=0.36, spectrum_decay=0.6, init_std=0.05),
    "larger": CompletionScenario("larger", (100, 120), 10, 1.0, outlier_fraction=0.20,
                                 signal_std=0.36, spectrum_decay=0.6, init_std=0.05),
}



def _component_scales(scenario: CompletionScenario) -> np.ndarray:
    """Per-component amplitude profile of the ground truth.

    Geometric decay across the true-rank components, normalized so the
    reconstructed signal keeps variance signal_std**2 overall.
    """
    rho = scenario.spectrum_decay
    weights = rho ** np.arange(scenario.true_rank, dtype=np.float64)
    # each component contributes variance proportional to weights**2
    weights *= np.sqrt(scenario.true_rank / np.sum(weights ** 2))
    return weights


def _sample_mask(rng: Rng, n_cells: int, fraction: float) -> np.ndarray:
    """Boolean flat mask with round(fraction * n_cells) observed cells."""
    n_obs = int(round(fraction * n_cells))
    if n_obs < 1:
        raise ValueError("observed_fraction leaves no observed entries")
    mask = np.zeros(n_cells, dtype=bool)
    mask[rng.permutation(n_cells)[:n_obs]] = True
    return mask


def matrix_completion(scenario: CompletionScenario | str, seed: int) -> ProblemSpec:
    """Masked least-squares recovery of A = U* V*' with explicit L2 on the factors."""
    if isinstance(scenario, str):
        scenario = MATRIX_SCENARIOS[scenario]
    m, n = scenario.shape
    r_true, r = scenario.true_rank, scenario.rank
    lam = scenario.lambda_reg

    data_rng = Rng(seed).derive(f"matrix_completion/{scenario.name}")
    gt_std = scenario.signal_std ** 0.5 * r_true ** -0.25
    comp_scale = np.sqrt(_component_scales(scenario))
    u_true = data_rng.normal(m * r_true, std=gt_std).reshape(m, r_true) * comp_scale
    v_true = data_rng.normal(n * r_true, std=gt_std).reshape(n, r_true) * comp_scale
    truth = u_true @ v_true.T
    mask = _sample_mask(data_rng, m * n, scenario.observed_fraction).reshape(m, n)
    mask_f = mask.astype(np.float64)
    n_obs = int(mask.sum())
    n_held = m * n - n_obs
    observed = truth
    if scenario.noise_std > 0:
        observed = truth + scenario.noise_std * data_rng.normal(m * n).reshape(m, n)
    observed = observed * mask_f

    def unpack(theta: ParamVector):
        return theta.segment("U").reshape(m, r), theta.segment("V").reshape(n, r)

    def loss_grad(theta: ParamVector):
        u, v = unpack(theta)
        err = (u @ v.T) * mask_f - observed
        loss = np.dot(err.ravel(), err.ravel()) / n_obs
        loss += lam * (np.dot(u.ravel(), u.ravel()) + np.dot(v.ravel(), v.ravel()))
        gu = (2.0 / n_obs) * (err @ v) + 2.0 * lam * u
        gv = (2.0 / n_obs) * (err.T @ u) + 2.0 * lam * v
        return float(loss), ParamVector.from_arrays([("U", gu), ("V", gv)])

    def loss_only(theta: ParamVector) -> float:
        u, v = unpack(theta)
        err = (u @ v.T) * mask_f - observed
        loss = np.dot(err.ravel(), err.ravel()) / n_obs
        loss += lam * (np.dot(u.ravel(), u.ravel()) + np.dot(v.ravel(), v.ravel()))
        return float(loss)

    def heldout_rmse(theta: ParamVector) -> float:
        u, v = unpack(theta)
        err = (u @ v.T - truth) * (1.0 - mask_f)
        return float(np.sqrt(np.dot(err.ravel(), err.ravel()) / n_held))

    def init(init_rng: Rng) -> ParamVector:
        flat = init_rng.normal((m + n) * r, std=scenario.init_std)
        return ParamVector.from_arrays([("U", flat[: m * r]), ("V", flat[m * r :])])

    return ProblemSpec(
        name=f"matrix_completion/{scenario.name}",
        dim=(m + n) * r,
        init=init,
        loss_grad=loss_grad,
        loss=loss_only,
        test_metric=heldout_rmse,
        metric_name="test_rmse",
        metric_kind="rmse",
        metadata={"scenario": scenario, "seed": seed, "truth": truth,
                  "mask": mask, "observations": observed},
    )


def tensor_completion(scenario: CompletionScenario | str, seed: int) -> ProblemSpec:
    """Masked CP (rank-r trilinear) recovery of a third-order tensor."""
    if isinstance(scenario, str):
        scenario = TENSOR_SCENARIOS[scenario]
    di, dj, dk = scenario.shape
    r_true, r = scenario.true_rank, scenario.rank
    lam = scenario.lambda_reg

    data_rng = Rng(seed).derive(f"tensor_completion/{scenario.name}")
    gt_std = scenario.signal_std ** (1.0 / 3.0) * r_true ** (-1.0 / 6.0)
    comp_scale = _component_scales(scenario) ** (1.0 / 3.0)
    u_true = data_rng.normal(di * r_true, std=gt_std).reshape(di, r_true) * comp_scale
    v_true = data_rng.normal(dj * r_true, std=gt_std).reshape(dj, r_true) * comp_scale
    w_true = data_rng.normal(dk * r_true, std=gt_std).reshape(dk, r_true) * comp_scale
    truth = np.einsum("ir,jr,kr->ijk", u_true, v_true, w_true)
    mask = _sample_mask(data_rng, di * dj * dk, scenario.observed_fraction).reshape(di, dj, dk)
    mask_f = mask.astype(np.float64)
    n_obs = int(mask.sum())
    n_held = di * dj * dk - n_obs
    observed = truth
    if scenario.noise_std > 0:
        observed = truth + scenario.noise_std * data_rng.normal(truth.size).reshape(truth.shape)
    observed = observed * mask_f

    def unpack(theta: ParamVector):
        return (theta.segment("U").reshape(di, r),
                theta.segment("V").reshape(dj, r),
                theta.segment("W").reshape(dk, r))

    def reconstruct(u, v, w):
        return np.einsum("ir,jr,kr->ijk", u, v, w, optimize=True)

    def loss_grad(theta: ParamVector):
        u, v, w = unpack(theta)
        err = reconstruct(u, v, w) * mask_f - observed
        sq = np.dot(err.ravel(), err.ravel())
        reg = (np.dot(u.ravel(), u.ravel()) + np.dot(v.ravel(), v.ravel())
               + np.dot(w.ravel(), w.ravel()))
        loss = sq / n_obs + lam * reg
        scale = 2.0 / n_obs
        gu = scale * np.einsum("ijk,jr,kr->ir", err, v, w, optimize=True) + 2.0 * lam * u
        gv = scale * np.einsum("ijk,ir,kr->jr", err, u, w, optimize=True) + 2.0 * lam * v
        gw = scale * np.einsum("ijk,ir,jr->kr", err, u, v, optimize=True) + 2.0 * lam * w
        return float(loss), ParamVector.from_arrays([("U", gu), ("V", gv), ("W", gw)])

    def loss_only(theta: ParamVector) -> float:
        u, v, w = unpack(theta)
        err = reconstruct(u, v, w) * mask_f - observed
        reg = (np.dot(u.ravel(), u.ravel()) + np.dot(v.ravel(), v.ravel())
               + np.dot(w.ravel(), w.ravel()))
        return float(np.dot(err.ravel(), err.ravel()) / n_obs + lam * reg)

    def heldout_rmse(theta: ParamVector) -> float:
        u, v, w = unpack(theta)
        err = (reconstruct(u, v, w) - truth) * (1.0 - mask_f)
        return float(np.sqrt(np.dot(err.ravel(), err.ravel()) / n_held))

    def init(init_rng: Rng) -> ParamVector:
        flat = init_rng.normal((di + dj + dk) * r, std=scenario.init_std)
        return ParamVector.from_arrays([
            ("U", flat[: di * r]),
            ("V", flat[di * r : (di + dj) * r]),
            ("W", flat[(di + dj) * r :]),
        ])

    return ProblemSpec(
        name=f"tensor_completion/{scenario.name}",
        dim=(di + dj + dk) * r,
        init=init,
        loss_grad=loss_grad,
        loss=loss_only,
        test_metric=heldout_rmse,
        metric_name="test_rmse",
        metric_kind="rmse",
        metadata={"scenario": scenario, "seed": seed, "truth": truth,
                  "mask": mask, "observations": observed},
    )


def robust_mf(scenario: CompletionScenario | str, seed: int) -> ProblemSpec:
    """Low-rank recovery under heavy outliers with a Huber data term.

    A seeded subset of the observed entries receives additive corruption of
    magnitude uniform in [4, 5] times the clean signal's standard deviation,
    with random sign. The held-out metric is reconstruction RMSE against the
    clean matrix over all entries.
    """
    if isinstance(scenario, str):
        scenario = ROBUST_SCENARIOS[scenario]
    m, n = scenario.shape
    r_true, r = scenario.true_rank, scenario.rank
    lam = scenario.lambda_reg
    delta = scenario.huber_delta

    data_rng = Rng(seed).derive(f"robust_mf/{scenario.name}")
    gt_std = scenario.signal_std ** 0.5 * r_true ** -0.25
    comp_scale = np.sqrt(_component_scales(scenario))
    u_true = data_rng.normal(m * r_true, std=gt_std).reshape(m, r_true) * comp_scale
    v_true = data_rng.normal(n * r_true, std=gt_std).reshape(n, r_true) * comp_scale
    truth = u_true @ v_true.T
    mask = _sample_mask(data_rng, m * n, scenario.observed_fraction).reshape(m, n)
    mask_f = mask.astype(np.float64)
    n_obs = int(mask.sum())

    obs_flat = np.flatnonzero(mask.ravel())
    n_out = int(round(scenario.outlier_fraction * n_obs))
    hit = obs_flat[data_rng.permutation(n_obs)[:n_out]]
    lo, hi = scenario.outlier_magnitude
    signal_std = float(truth.std())
    magnitude = (lo + (hi - lo) * data_rng.uniform(n_out)) * signal_std
    sign = np.where(data_rng.uniform(n_out) < 0.5, -1.0, 1.0)
    observed = truth.copy().ravel()
    observed[hit] += sign * magnitude
    observed = observed.reshape(m, n) * mask_f

    def unpack(theta: ParamVector):
        return theta.segment("U").reshape(m, r), theta.segment("V").reshape(n, r)

    def huber_terms(resid: np.ndarray):
        absr = np.abs(resid)
        quad = absr <= delta
        values = np.where(quad, 0.5 * resid * resid, delta * (absr - 0.5 * delta))
        return values

    def loss_grad(theta: ParamVector):
        u, v = unpack(theta)
        resid = (u @ v.T - observed) * mask_f
        loss = huber_terms(resid).sum() / n_obs
        loss += lam * (np.dot(u.ravel(), u.ravel()) + np.dot(v.ravel(), v.ravel()))
        # dHuber/dr = clip(r, -delta, delta)
        psi = np.clip(resid, -delta, delta) * mask_f
        gu = (psi @ v) / n_obs + 2.0 * lam * u
        gv = (psi.T @ u) / n_obs + 2.0 * lam * v
        return float(loss), ParamVector.from_arrays([("U", gu), ("V", gv)])

    def loss_only(theta: ParamVector) -> float:
        u, v = unpack(theta)
        resid = (u @ v.T - observed) * mask_f
        loss = huber_terms(resid).sum() / n_obs
        loss += lam * (np.dot(u.ravel(), u.ravel()) + np.dot(v.ravel(), v.ravel()))
        return float(loss)

    def clean_rmse(theta: ParamVector) -> float:
        u, v = unpack(theta)
        err = u @ v.T - truth
        return float(np.sqrt(np.mean(err * err)))

    def init(init_rng: Rng) -> ParamVector:
        flat = init_rng.normal((m + n) * r, std=scenario.init_std)
        return ParamVector.from_arrays([("U", flat[: m * r]), ("V", flat[m * r :])])

    return ProblemSpec(
        name=f"robust_mf/{scenario.name}",
        dim=(m + n) * r,
        init=init,
        loss_grad=loss_grad,
        loss=loss_only,
        test_metric=clean_rmse,
        metric_name="test_rmse",
        metric_kind="rmse",
        metadata={"scenario": scenario, "seed": seed, "truth": truth,
                  "mask": mask, "observations": observed,
                  "outlier_cells": hit},
    )
