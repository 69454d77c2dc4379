"""Runtime property suite: the checks behind the `verify` subcommand.

Each check is independent of the code path it validates: finite differences
for gradients, closed-form solutions for the integrator, direct norm
inequalities for the momentum bounds, and a standalone Adam trajectory for
the hybrid optimizer's fallback branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .harness import ExperimentConfig, run_single
from .ode import OdeConfig, integrate, step_once
from .optim import (
    FlowAdam,
    clip_grad,
    clip_vel,
    mode_preset,
    ode_propose,
    soft_inject,
    with_overrides,
)
from .params import ParamVector, Rng
from .problems import (
    CompletionScenario,
    ProblemSpec,
    inverse_kinematics,
    matrix_completion,
    robust_mf,
    rosenbrock,
    stiff_valley,
    tensor_completion,
    two_spirals,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def finite_difference_grad(loss_fn, theta: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient with steps scaled by coordinate magnitude."""
    grad = np.empty_like(theta)
    for i in range(theta.size):
        h = rel_step * max(1.0, abs(theta[i]))
        up = theta.copy()
        up[i] += h
        dn = theta.copy()
        dn[i] -= h
        grad[i] = (loss_fn(up) - loss_fn(dn)) / (2.0 * h)
    return grad


def check_problem_gradient(problem: ProblemSpec, n_points: int = 10,
                           rel_tol: float = 1e-4, seed: int = 7) -> tuple[bool, str]:
    """Analytic gradient vs finite differences at random points near the init."""
    rng = Rng(seed).derive(f"fd/{problem.name}")
    template = problem.init(Rng(seed).derive("fd-init"))

    def loss_at(arr):
        return problem.loss_grad(template.with_data(arr))[0]

    worst = 0.0
    for _ in range(n_points):
        point = template.data + rng.normal(problem.dim, std=0.3)
        _, grad = problem.loss_grad(template.with_data(point))
        fd = finite_difference_grad(loss_at, point)
        denom = max(float(np.linalg.norm(fd)), 1e-8)
        rel = float(np.linalg.norm(grad.data - fd)) / denom
        worst = max(worst, rel)
        if rel > rel_tol:
            return False, f"relative error {rel:.2e} > {rel_tol:.0e}"
    return True, f"worst relative error {worst:.2e}"


# small instances: cheap enough for finite differencing, same code paths as
# the full-size benchmarks
def oracle_problems(seed: int = 3) -> list[ProblemSpec]:
    return [
        rosenbrock(),
        stiff_valley(dim=8, seed=seed),
        matrix_completion(CompletionScenario("fd", (6, 8), 2, 0.6, model_rank=4), seed),
        tensor_completion(CompletionScenario("fd", (4, 5, 6), 2, 0.5, model_rank=3), seed),
        robust_mf(CompletionScenario("fd", (6, 8), 2, 1.0, model_rank=4,
                                     outlier_fraction=0.2), seed),
        inverse_kinematics(n_links=3, n_waypoints=4, seed=seed),
        two_spirals(n=10, seed=seed)[1],
    ]


def _check_gradient_oracles() -> CheckResult:
    details = []
    for problem in oracle_problems():
        ok, detail = check_problem_gradient(problem)
        if not ok:
            return CheckResult("gradient_oracles", False, f"{problem.name}: {detail}")
        details.append(problem.name)
    return CheckResult("gradient_oracles", True, f"{len(details)} problems checked")


def _check_ode_linear_decay() -> CheckResult:
    cfg = OdeConfig()
    tol = 10.0 * (cfg.rtol + cfg.atol)
    for span in (0.1, 0.5, 1.0, 2.0):
        res = integrate(lambda y: y.with_data(-y.data), ParamVector([1.0]), span, cfg)
        if not res.ok:
            return CheckResult("ode_linear_decay", False, f"status {res.status} at span {span}")
        err = abs(res.y_end.data[0] - math.exp(-span))
        if err > tol:
            return CheckResult("ode_linear_decay", False,
                               f"span {span}: error {err:.2e} > {tol:.0e}")
    return CheckResult("ode_linear_decay", True, "endpoint matches exp(-t) at 4 spans")


def _check_ode_convergence_order() -> CheckResult:
    cfg = OdeConfig()
    y = ParamVector([1.0])
    field = lambda v: v.with_data(-v.data)
    h = 0.2
    _, err_h, _, _ = step_once(field, y, h, cfg)
    _, err_h2, _, _ = step_once(field, y, h / 2.0, cfg)
    order = math.log2(err_h / err_h2)
    ok = order >= 4.5
    return CheckResult("ode_convergence_order", ok, f"empirical order {order:.2f}")


def _check_ode_clipped_quadratic() -> CheckResult:
    # inside the unit box the clip is inactive and the flow is exactly e^{-t} y0
    y0 = ParamVector(np.array([0.5, -0.3, 0.8]))

    def field(y: ParamVector) -> ParamVector:
        return y.with_data(-np.clip(y.data, -1.0, 1.0))

    res = integrate(field, y0, 0.5, OdeConfig())
    err = float(np.max(np.abs(res.y_end.data - y0.data * math.exp(-0.5))))
    ok = res.ok and err < 1e-3
    return CheckResult("ode_clip_inactive_flow", ok, f"max endpoint error {err:.2e}")


def _check_lemma_soft_injection() -> CheckResult:
    rng = Rng(2024).derive("lemma")
    for i in range(1000):
        n = 1 + int(rng.uniform(1)[0] * 20)
        m = rng.normal(n, std=1.0 + i % 3)
        vt = rng.normal(n, std=0.5 + i % 5)
        gamma = float(rng.uniform(1)[0])
        blended = soft_inject(m, vt, gamma)
        bound = max(float(np.linalg.norm(m)), float(np.linalg.norm(vt)))
        if float(np.linalg.norm(blended)) > bound + 1e-12:
            return CheckResult("soft_injection_bound", False, f"violated at trial {i}")
    return CheckResult("soft_injection_bound", True, "1000 random blends bounded")


def _check_clip_grad_properties() -> CheckResult:
    rng = Rng(5).derive("clipgrad")
    for _ in range(200):
        g = ParamVector(rng.normal(16, std=3.0))
        c = clip_grad(g)
        cc = clip_grad(c)
        if not np.array_equal(c.data, cc.data):
            return CheckResult("clip_grad_properties", False, "not idempotent")
        if np.any(g.data * c.data < 0):
            return CheckResult("clip_grad_properties", False, "sign flipped")
        if np.max(np.abs(c.data)) > 1.0:
            return CheckResult("clip_grad_properties", False, "exceeds unit box")
    return CheckResult("clip_grad_properties", True, "idempotent, sign-preserving, bounded")


def _check_clip_vel_bound() -> CheckResult:
    rng = Rng(6).derive("clipvel")
    for _ in range(500):
        m = rng.normal(12, std=0.5)
        v = rng.normal(12, std=4.0)
        out = clip_vel(v, m, 5.0)
        limit = 5.0 * float(np.linalg.norm(m))
        if float(np.linalg.norm(out)) > limit + 1e-12:
            return CheckResult("clip_vel_bound", False, "norm exceeds 5x momentum")
        if float(np.linalg.norm(v)) <= limit and out is not v:
            return CheckResult("clip_vel_bound", False, "modified a vector under threshold")
    return CheckResult("clip_vel_bound", True, "500 random velocities bounded")


def _check_adam_equivalence() -> CheckResult:
    for problem_name, steps in (("rosenbrock", 300), ("stiff_valley", 200)):
        base = ExperimentConfig(problem=problem_name, optimizer="adam",
                                steps=steps, seeds=(1,))
        hybrid = ExperimentConfig(problem=problem_name, optimizer="flowadam",
                                  steps=steps, seeds=(1,),
                                  overrides={"t_warmup": math.inf})
        rb = run_single(base, 1)
        rh = run_single(hybrid, 1)
        diff = max(abs(a - b) for a, b in zip(rb.series["train_loss"],
                                              rh.series["train_loss"]))
        if diff > 0.0:
            return CheckResult("adam_equivalence", False,
                               f"{problem_name}: loss series differ by {diff:.2e}")
    return CheckResult("adam_equivalence", True, "disabled triggers reproduce Adam exactly")


def _check_descent_property() -> CheckResult:
    # direct check on ODE proposals for random quadratics and Rosenbrock
    cfg = mode_preset("B")
    tol = 10.0 * (cfg.ode.rtol + cfg.ode.atol)
    rng = Rng(11).derive("descent")
    for trial in range(20):
        n = 3 + trial % 5
        diag = 0.5 + 3.0 * rng.uniform(n)

        def make_quad(d):
            def loss_grad(theta: ParamVector):
                g = d * theta.data
                return float(0.5 * np.dot(theta.data, g)), theta.with_data(g)
            return loss_grad

        quad = ProblemSpec(name="quad", dim=n, init=lambda r: ParamVector(np.zeros(n)),
                           loss_grad=make_quad(diag))
        theta = ParamVector(rng.normal(n, std=2.0))
        theta_new, _, _, status = ode_propose(quad, theta, cfg)
        if status.value == "success":
            before = quad.loss_grad(theta)[0]
            after = quad.loss_grad(theta_new)[0]
            if after > before + tol:
                return CheckResult("clipped_flow_descent", False,
                                   f"quadratic trial {trial}: {after:.6f} > {before:.6f}")
    rb = rosenbrock()
    theta = ParamVector(np.array([-1.5, 1.5]))
    for _ in range(50):
        theta_new, _, _, status = ode_propose(rb, theta, cfg)
        if status.value == "success":
            before = rb.loss_grad(theta)[0]
            after = rb.loss_grad(theta_new)[0]
            if after > before + tol:
                return CheckResult("clipped_flow_descent", False, "rosenbrock ascent")
            theta = theta_new
    return CheckResult("clipped_flow_descent", True,
                       "no ascent beyond solver slack on quadratics and Rosenbrock")


def _check_descent_in_runs() -> CheckResult:
    cfg = ExperimentConfig(problem="rosenbrock", optimizer="flowadam", mode="B",
                           steps=200, seeds=(1,))
    report = run_single(cfg, 1)
    v = report.finals["descent_violations"]
    return CheckResult("descent_in_live_run", v == 0,
                       f"{v} violations over {report.finals['trigger_count']} triggers")


def _check_accounting() -> CheckResult:
    cfg = ExperimentConfig(problem="stiff_valley", optimizer="flowadam", mode="B",
                           steps=60, seeds=(2,))
    report = run_single(cfg, 2)
    expected = report.finals["steps_run"] + report.finals["total_nfe"]
    got = report.finals["total_grad_evals"]
    prev = 0
    for i in range(report.steps_run):
        inc = report.series["cum_grad_evals"][i] - prev
        prev = report.series["cum_grad_evals"][i]
        want = 1 + report.series["nfe"][i]
        if inc != want:
            return CheckResult("grad_eval_accounting", False,
                               f"step {i + 1}: increment {inc} != {want}")
    return CheckResult("grad_eval_accounting", got == expected,
                       f"total {got} vs steps+nfe {expected}")


def _check_determinism() -> CheckResult:
    cfg = ExperimentConfig(problem="matrix_completion", scenario="small",
                           optimizer="flowadam", mode="B", steps=25, seeds=(4,))
    a = run_single(cfg, 4)
    b = run_single(cfg, 4)
    same = (a.series["train_loss"] == b.series["train_loss"]
            and a.series["cum_grad_evals"] == b.series["cum_grad_evals"]
            and a.finals["final_metric"] == b.finals["final_metric"])
    return CheckResult("run_determinism", same, "two identical runs, identical reports")


ALL_CHECKS = (
    _check_ode_linear_decay,
    _check_ode_convergence_order,
    _check_ode_clipped_quadratic,
    _check_lemma_soft_injection,
    _check_clip_grad_properties,
    _check_clip_vel_bound,
    _check_gradient_oracles,
    _check_adam_equivalence,
    _check_descent_property,
    _check_descent_in_runs,
    _check_accounting,
    _check_determinism,
)


def run_all_checks() -> list[CheckResult]:
    return [check() for check in ALL_CHECKS]
