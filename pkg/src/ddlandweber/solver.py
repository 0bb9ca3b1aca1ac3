"""Landweber-type iterations with discrepancy-principle stopping.

Three schemes share one loop:

* ``landweber``:  ``u <- u - w F'(u)^*(F(u) - y)``
* ``irl``:        Landweber step minus ``lam_k * D_k`` with the learned
  damping ``D_k = A^T(A u - y)`` (optionally normalized to unit length)
* ``perturbed``:  ``u <- u - (w R + lam_k A)^*(w (R u - y) + lam_k (A u - y))``

At iteration ``k`` the residual of ``u_k`` is measured first; the loop
stops at the first ``k`` with ``|F(u_k) - y| <= tau * delta`` or at
``max_iterations``.  ``lam_k`` is computed from that same residual.
"""
import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DivergenceError, ParameterError, frobenius_norm, spectral_norm
from .schlieren import schlieren_inf_norm

__all__ = [
    "ConfigError",
    "NORMS",
    "LambdaSchedule",
    "StoppingRule",
    "SolverConfig",
    "IterationRecord",
    "IterationTrace",
    "run_landweber",
    "run_irl",
    "run_perturbed",
    "run",
    "TheoryReport",
    "theory_constants",
    "lemma_constant",
    "MonotonicityReport",
    "verify_monotonicity",
]

log = logging.getLogger(__name__)

NORMS = {
    "spectral": spectral_norm,
    "frobenius": frobenius_norm,
    "schlieren_inf": schlieren_inf_norm,
}
SCHEMES = ("landweber", "irl", "perturbed")
# iterates with entries beyond this are treated as diverged
BLOWUP = 1e100
# absolute slack when testing error monotonicity
MONOTONE_TOL = 1e-12


class ConfigError(ValueError):
    """Raised for inconsistent solver or experiment configuration."""


def _norm(name):
    try:
        return NORMS[name]
    except KeyError:
        raise ConfigError(f"unknown norm {name!r}; expected one of {sorted(NORMS)}") from None


@dataclass(frozen=True)
class LambdaSchedule:
    """``lam_k = coefficient * |res_k|`` (linear) or ``coefficient * |res_k|^2`` (quadratic)."""

    kind: str = "quadratic_in_residual"
    coefficient: float = 0.0
    norm_choice: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("linear_in_residual", "quadratic_in_residual"):
            raise ConfigError(f"unknown lambda schedule kind {self.kind!r}")
        if self.coefficient < 0:
            raise ConfigError("lambda coefficient must be non-negative")
        if self.norm_choice is not None:
            _norm(self.norm_choice)

    def __call__(self, residual_norm):
        if self.kind == "linear_in_residual":
            return self.coefficient * residual_norm
        return self.coefficient * residual_norm * residual_norm


@dataclass(frozen=True)
class StoppingRule:
    tau: float = 2.0
    delta: float = 0.0
    max_iterations: int = 200

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.delta < 0:
            raise ConfigError("delta must be non-negative")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be non-negative")

    @property
    def threshold(self):
        return self.tau * self.delta


@dataclass
class SolverConfig:
    """Parameters of one run.

    ``initial_guess`` is ``"zero"``, a constant, or a grid.  ``residual_norm``
    names the norm used by the stopping rule (and by the schedule unless
    it names its own).  ``ball_radius`` only enables monitoring of
    ``|u_k - truth| <= ball_radius``; iterates are never projected.
    """

    scheme: str = "landweber"
    step_size: float = 1.0
    lambda_schedule: Optional[LambdaSchedule] = None
    stopping: StoppingRule = field(default_factory=StoppingRule)
    initial_guess: object = "zero"
    residual_norm: str = "frobenius"
    normalize_damping: bool = False
    snapshot_every: int = 0
    ball_radius: Optional[float] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.step_size > 0:
            raise ConfigError("step_size must be positive")
        _norm(self.residual_norm)

    def initial_iterate(self, shape):
        g = self.initial_guess
        if isinstance(g, str):
            if g != "zero":
                raise ConfigError(f"unknown initial guess {g!r}")
            return np.zeros(shape)
        if np.isscalar(g):
            return np.full(shape, float(g))
        g = np.array(g, dtype=np.float64)
        if g.shape != tuple(shape):
            raise ConfigError(f"initial guess has shape {g.shape}, expected {tuple(shape)}")
        return g


@dataclass(frozen=True)
class IterationRecord:
    k: int
    residual_F: float
    residual_A: Optional[float] = None
    lambda_k: float = 0.0
    error_to_truth: Optional[float] = None


@dataclass
class IterationTrace:
    """Per-iteration scalars of a run plus the final iterate.

    ``records`` cover ``k = 0 .. k_star - 1``; the residual (and error) of
    the returned iterate ``u_{k_star}`` is held in the ``final_*`` fields.
    """

    records: list
    final_iterate: np.ndarray
    stop_reason: str
    final_residual_F: float
    tau: float = 0.0
    delta: float = 0.0
    final_residual_A: Optional[float] = None
    final_error: Optional[float] = None
    initial_error: Optional[float] = None
    degenerate_steps: int = 0
    ball_exit: Optional[int] = None
    snapshots: dict = field(default_factory=dict)

    @property
    def k_star(self):
        return len(self.records)

    def column(self, name):
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records])

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "residual_F", "residual_A", "lambda_k", "error_to_truth"])
        for r in self.records:
            writer.writerow([r.k, _fmt(r.residual_F), _fmt(r.residual_A), _fmt(r.lambda_k), _fmt(r.error_to_truth)])
        buf.write(f"#stop,{self.stop_reason},{self.k_star}\n")
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _fmt(x):
    return "" if x is None else repr(float(x))


def _parse(x):
    return None if x == "" else float(x)


def read_trace_csv(path):
    """Parse a trace CSV into ``(records, stop_reason, k_star)``."""
    records, stop_reason, k_star = [], None, None
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "k,residual_F,residual_A,lambda_k,error_to_truth":
        raise ValueError(f"{path}: not a trace CSV")
    for row in csv.reader(lines[1:]):
        if not row:
            continue
        if row[0] == "#stop":
            stop_reason, k_star = row[1], int(row[2])
            continue
        k, rf, ra, lam, err = row
        records.append(IterationRecord(int(k), float(rf), _parse(ra), _parse(lam) or 0.0, _parse(err)))
    return records, stop_reason, k_star


def _check_finite(u, k):
    if not np.all(np.isfinite(u)) or np.abs(u).max(initial=0.0) > BLOWUP:
        raise DivergenceError(k + 1, f"iterate u_{k + 1} is non-finite or exceeds {BLOWUP:g} (step {k})")


def _loop(F, y_delta, cfg, update, A=None, truth=None):
    y_delta = np.asarray(y_delta, dtype=np.float64)
    if tuple(y_delta.shape) != tuple(F.range_shape):
        raise ParameterError(f"data shape {y_delta.shape} does not match operator range {F.range_shape}")
    stop_norm = _norm(cfg.residual_norm)
    sched = cfg.lambda_schedule
    lam_norm = _norm(sched.norm_choice) if sched is not None and sched.norm_choice else stop_norm
    rule = cfg.stopping
    u = cfg.initial_iterate(F.domain_shape)
    records = []
    snapshots = {}
    state = {"degenerate": 0}
    ball_exit = None
    initial_error = frobenius_norm(u - truth) if truth is not None else None

    k = 0
    while True:
        res = F.apply(u) - y_delta
        r_F = stop_norm(res)
        res_A = A.apply(u) - y_delta if A is not None else None
        r_A = stop_norm(res_A) if res_A is not None else None
        err = frobenius_norm(u - truth) if truth is not None else None
        if err is not None and cfg.ball_radius is not None and ball_exit is None and err > cfg.ball_radius:
            ball_exit = k
        if cfg.snapshot_every and k % cfg.snapshot_every == 0:
            snapshots[k] = u.copy()
        if r_F <= rule.threshold:
            reason = "discrepancy"
            break
        if k >= rule.max_iterations:
            reason = "max_iterations"
            break
        lam = sched(lam_norm(res)) if sched is not None else 0.0
        records.append(IterationRecord(k, r_F, r_A, lam, err))
        u = update(u, res, res_A, lam, state)
        _check_finite(u, k)
        k += 1

    return IterationTrace(
        records=records,
        final_iterate=u,
        stop_reason=reason,
        final_residual_F=r_F,
        tau=rule.tau,
        delta=rule.delta,
        final_residual_A=r_A,
        final_error=err,
        initial_error=initial_error,
        degenerate_steps=state["degenerate"],
        ball_exit=ball_exit,
        snapshots=snapshots,
    )


def run_landweber(F, y_delta, cfg, truth=None):
    """Plain Landweber iteration with step ``cfg.step_size``."""
    omega = cfg.step_size

    def update(u, res, res_A, lam, state):
        return u - omega * F.derivative_adjoint_apply(u, res)

    return _loop(F, y_delta, cfg, update, truth=truth)


def _damping_direction(A, res_A, y_delta, normalize, state):
    g = A.apply_adjoint(res_A)
    if not normalize:
        return g
    from .learned import DAMPING_GUARD

    ng = frobenius_norm(g)
    if ng <= DAMPING_GUARD * max(1.0, frobenius_norm(y_delta)):
        state["degenerate"] += 1
        return np.zeros_like(g)
    return g / ng


def run_irl(F, A, y_delta, cfg, normalize_damping=None, truth=None):
    """Iteratively regularized Landweber with learned damping operator ``A``.

    ``normalize_damping`` defaults to ``cfg.normalize_damping``.
    """
    if cfg.lambda_schedule is None:
        raise ConfigError("the irl scheme needs a lambda schedule")
    if tuple(A.domain_shape) != tuple(F.domain_shape) or tuple(A.range_shape) != tuple(F.range_shape):
        raise ParameterError("learned operator shapes do not match the forward operator")
    normalize = cfg.normalize_damping if normalize_damping is None else bool(normalize_damping)
    omega = cfg.step_size
    y_delta = np.asarray(y_delta, dtype=np.float64)

    def update(u, res, res_A, lam, state):
        new = u - omega * F.derivative_adjoint_apply(u, res)
        if lam != 0.0:
            new = new - lam * _damping_direction(A, res_A, y_delta, normalize, state)
        return new

    return _loop(F, y_delta, cfg, update, A=A, truth=truth)


def run_perturbed(R, A, y_delta, cfg, truth=None):
    """Gradient step on ``1/2 |w (R u - y) + lam_k (A u - y)|^2`` with ``lam_k`` frozen per step.

    The adjoint of the combined operator is expanded term by term, so a
    zero ``lam_k`` reduces exactly to Landweber with step ``w**2``.
    """
    if not getattr(R, "linear", False):
        raise ParameterError("the perturbed scheme requires a linear forward operator")
    if cfg.lambda_schedule is None:
        raise ConfigError("the perturbed scheme needs a lambda schedule")
    if tuple(A.domain_shape) != tuple(R.domain_shape) or tuple(A.range_shape) != tuple(R.range_shape):
        raise ParameterError("learned operator shapes do not match the forward operator")
    w = cfg.step_size
    w2 = w**2

    def update(u, res, res_A, lam, state):
        new = u - w2 * R.apply_adjoint(res)
        if lam != 0.0:
            cross = R.apply_adjoint(res_A) + A.apply_adjoint(res)
            new = new - (w * lam) * cross - (lam * lam) * A.apply_adjoint(res_A)
        return new

    return _loop(R, y_delta, cfg, update, A=A, truth=truth)


def run(F, y_delta, cfg, A=None, truth=None):
    """Dispatch on ``cfg.scheme``."""
    if cfg.scheme == "landweber":
        return run_landweber(F, y_delta, cfg, truth=truth)
    if A is None:
        raise ConfigError(f"scheme {cfg.scheme!r} needs a learned operator")
    if cfg.scheme == "irl":
        return run_irl(F, A, y_delta, cfg, truth=truth)
    return run_perturbed(F, A, y_delta, cfg, truth=truth)


@dataclass(frozen=True)
class TheoryReport:
    C_tau: float
    eq_ctau_ok: bool
    contraction_coefficient: float


def theory_constants(L_F, L_A, nu, rho, tau, C_lambda, C_A_delta):
    """Constants of the monotonicity argument.

    ``C_tau = 1 - L_F^2 - nu - (1 + nu)/tau``; the step is contractive in
    the error when ``C_tau - 2 L_A C_A_delta C_lambda rho > 0``, and the
    squared error then drops by at least ``contraction_coefficient`` times
    the squared residual, where the coefficient is twice that margin.
    ``tau = inf`` gives the noise-free limit.
    """
    if not tau > 0:
        raise ParameterError("tau must be positive")
    for name, value in (("L_F", L_F), ("L_A", L_A), ("nu", nu), ("rho", rho),
                        ("C_lambda", C_lambda), ("C_A_delta", C_A_delta)):
        if value < 0:
            raise ParameterError(f"{name} must be non-negative")
    c_tau = 1.0 - L_F**2 - nu - (1.0 + nu) / tau
    margin = c_tau - 2.0 * L_A * C_A_delta * C_lambda * rho
    return TheoryReport(C_tau=c_tau, eq_ctau_ok=bool(margin > 0), contraction_coefficient=2.0 * margin)


def lemma_constant(L_A, rho, norm_A_of_truth, norm_y_delta):
    """Bound ``L_A rho + |A(u_true)| + |y_delta|`` on the damping residual inside the ball."""
    return L_A * rho + norm_A_of_truth + norm_y_delta


@dataclass(frozen=True)
class MonotonicityReport:
    monotone: bool
    first_violation: Optional[int]
    summability_partial: float
    left_inequality_ok: bool
    rhs_unsquared: Optional[float] = None
    rhs_squared: Optional[float] = None


def verify_monotonicity(trace, contraction_coefficient=None):
    """Check error monotonicity and the stopping-index inequality of a trace.

    ``first_violation`` is the first ``k`` with
    ``error(k) > error(k-1) + 1e-12``.  The final iterate's error is
    included when the trace holds it.  ``left_inequality_ok`` tests
    ``k_star (tau delta)^2 <= sum_{k < k_star} residual_F(k)^2``.  Given
    the contraction coefficient, both the unsquared and squared
    initial-error bounds on that sum are reported.
    """
    errors = [r.error_to_truth for r in trace.records]
    if any(e is None for e in errors) or (not errors and trace.final_error is None):
        raise ParameterError("trace has no error_to_truth values; run with a truth image")
    if trace.final_error is not None:
        errors.append(trace.final_error)
    first = None
    for k in range(1, len(errors)):
        if errors[k] > errors[k - 1] + MONOTONE_TOL:
            first = k
            break
    partial = math.fsum(r.residual_F**2 for r in trace.records)
    left_ok = trace.k_star * (trace.tau * trace.delta) ** 2 <= partial
    rhs_u = rhs_s = None
    if contraction_coefficient is not None and contraction_coefficient > 0 and trace.initial_error is not None:
        rhs_u = trace.initial_error / contraction_coefficient
        rhs_s = trace.initial_error**2 / contraction_coefficient
        log.info("residual sum %.6g; bound with |e0|: %.6g, with |e0|^2: %.6g", partial, rhs_u, rhs_s)
    return MonotonicityReport(first is None, first, partial, left_ok, rhs_u, rhs_s)
