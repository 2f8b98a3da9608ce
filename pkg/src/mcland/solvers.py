"""First-order solvers: Armijo gradient descent, minibatch SGD, perturbed GD.

All solvers record a per-iteration trace (objective split, gradient norm,
accepted step, cumulative per-entry gradient work) and are deterministic
given their config seed.  Entry-gradient accounting counts |Omega| per full
gradient and `batch` per stochastic step; trace diagnostics (objective and
gradient norms recorded for inspection) are not charged to the budget.
"""

import csv
import io
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import objective as obj
from .rng import substream

_STEP_UNDERFLOW = 1e-16
_ESCAPE_REL = 1e-6


def _escaped(snap_f, f_now):
    # relative margin: near-zero snapshots would make any absolute margin
    # unbeatable on a nonnegative objective
    return snap_f - f_now > _ESCAPE_REL * abs(snap_f)


class Method(str, Enum):
    GD = "gd"
    SGD = "sgd"
    PERTURBED_GD = "perturbed_gd"


class Status(str, Enum):
    GRAD_TOL = "grad_tol_reached"
    MAX_ITERS = "max_iters_reached"
    LINE_SEARCH_STALLED = "line_search_stalled"


@dataclass(frozen=True)
class ArmijoParams:
    c1: float = 1e-4
    backtrack: float = 0.5
    step0: float | None = None  # default: 1 / (Hessian norm estimate at X0)

    def __post_init__(self):
        if not 0 < self.c1 < 1:
            raise ValueError(f"c1 must lie in (0, 1), got {self.c1}")
        if not 0 < self.backtrack < 1:
            raise ValueError(f"backtrack must lie in (0, 1), got {self.backtrack}")
        if self.step0 is not None and self.step0 <= 0:
            raise ValueError(f"step0 must be positive, got {self.step0}")


@dataclass(frozen=True)
class SgdParams:
    batch: int = 64
    step_base: float | None = None  # default: same spectral heuristic as GD
    step_decay: float = 1e-3

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if self.step_base is not None and self.step_base <= 0:
            raise ValueError(f"step_base must be positive, got {self.step_base}")
        if self.step_decay < 0:
            raise ValueError(f"step_decay must be non-negative, got {self.step_decay}")


@dataclass(frozen=True)
class PerturbParams:
    radius: float | None = None            # default: 10 * grad_tol
    trigger_grad_norm: float | None = None  # default: 10 * grad_tol
    cooldown_iters: int = 100

    def __post_init__(self):
        if self.radius is not None and self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.trigger_grad_norm is not None and self.trigger_grad_norm <= 0:
            raise ValueError(f"trigger_grad_norm must be positive, got {self.trigger_grad_norm}")
        if self.cooldown_iters < 1:
            raise ValueError(f"cooldown_iters must be >= 1, got {self.cooldown_iters}")


@dataclass(frozen=True)
class SolverConfig:
    method: Method = Method.GD
    max_iters: int = 20000
    grad_tol: float | None = None  # default: 1e-8 * (1 + f(X0))
    seed: int = 0
    armijo: ArmijoParams = field(default_factory=ArmijoParams)
    sgd: SgdParams = field(default_factory=SgdParams)
    perturb: PerturbParams = field(default_factory=PerturbParams)

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise ValueError(f"grad_tol must be positive, got {self.grad_tol}")


TRACE_COLUMNS = ("iter", "f", "data_term", "reg_term", "grad_norm", "step", "cum_entry_grads")


class Trace:
    """Columnar per-iteration history; `reg_term` is the weighted penalty."""

    def __init__(self):
        self.iters = []
        self.f = []
        self.data_term = []
        self.reg_term = []
        self.grad_norm = []
        self.step = []
        self.cum_entry_grads = []

    def append(self, it, bdown, weight, grad_norm, step, cum_entry_grads):
        self.iters.append(it)
        self.f.append(bdown.total)
        self.data_term.append(bdown.data_term)
        self.reg_term.append(weight * bdown.reg_term)
        self.grad_norm.append(grad_norm)
        self.step.append(step)
        self.cum_entry_grads.append(cum_entry_grads)

    def __len__(self):
        return len(self.iters)


@dataclass(frozen=True, eq=False)
class SolveResult:
    X: np.ndarray
    f: float
    grad_norm: float
    status: Status
    iterations: int
    trace: Trace
    entry_grads: int


def trace_to_csv(trace, stream=None):
    """Write the trace as CSV; returns the text when no stream is given."""
    own = stream is None
    if own:
        stream = io.StringIO()
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for k in range(len(trace)):
        w.writerow(
            [
                trace.iters[k],
                repr(trace.f[k]),
                repr(trace.data_term[k]),
                repr(trace.reg_term[k]),
                repr(trace.grad_norm[k]),
                repr(trace.step[k]),
                trace.cum_entry_grads[k],
            ]
        )
    if own:
        return stream.getvalue()
    return None


def random_init(d, r, obs, seed):
    """Gaussian start scaled to the observed energy.

    Entry variance is s^2 / (d r): s^2 is the diagonal-sum estimate
    sum_{(i,i) observed} M_ii / p when the mask touches the diagonal, else
    the Frobenius estimate ||P_Omega(M)||_F^2 / p.
    """
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= d, got r={r}, d={d}")
    mask = obs.mask
    p = obs.p if obs.p > 0 else 1.0
    diag = mask.rows == mask.cols
    if np.any(diag):
        s2 = float(obs.values[diag].sum()) / p
    else:
        s2 = float(obs.values @ obs.values) / p
    s2 = max(s2, 0.0)
    rng = substream(seed, "init")
    return rng.standard_normal((d, r)) * np.sqrt(s2 / (d * r))


def _auto_grad_tol(cfg, X0, scfg):
    if scfg.grad_tol is not None:
        return scfg.grad_tol
    f0 = obj.objective(X0, cfg).total
    return 1e-8 * (1.0 + f0)


def _auto_step0(cfg, X0, explicit):
    if explicit is not None:
        return explicit
    op = obj.operator_norm_estimate(X0, cfg)
    if op <= 0:
        return 1.0
    return 1.0 / op


def _armijo_step(cfg, X, bdown, G, gn2, t_init, params):
    """Backtrack from t_init until the sufficient-decrease test passes.

    Returns (t, X_new, bdown_new) or None when the step underflows.
    """
    t = t_init
    while t >= _STEP_UNDERFLOW:
        X_new = X - t * G
        bdown_new = obj.objective(X_new, cfg)
        if bdown_new.total <= bdown.total - params.c1 * t * gn2:
            return t, X_new, bdown_new
        t *= params.backtrack
    return None


def gradient_descent(cfg, scfg, X0):
    """Armijo-backtracked gradient descent to the gradient-norm tolerance."""
    X = np.array(X0, dtype=float)
    grad_tol = _auto_grad_tol(cfg, X, scfg)
    step_init = _auto_step0(cfg, X, scfg.armijo.step0)
    n_pairs = cfg.n_pairs

    trace = Trace()
    weight = cfg.hyper.reg_weight
    bdown = obj.objective(X, cfg)
    cum = 0
    G = obj.gradient(X, cfg)
    cum += n_pairs
    gn = float(np.linalg.norm(G))
    trace.append(0, bdown, weight, gn, 0.0, cum)

    status = Status.MAX_ITERS
    it = 0
    t_prev = step_init
    for it in range(1, scfg.max_iters + 1):
        if gn <= grad_tol:
            status = Status.GRAD_TOL
            it -= 1
            break
        hit = _armijo_step(cfg, X, bdown, G, gn * gn, 2.0 * t_prev, scfg.armijo)
        if hit is None:
            status = Status.LINE_SEARCH_STALLED
            it -= 1
            break
        t_prev, X, bdown = hit
        G = obj.gradient(X, cfg)
        cum += n_pairs
        gn = float(np.linalg.norm(G))
        trace.append(it, bdown, weight, gn, t_prev, cum)
    else:
        if gn <= grad_tol:
            status = Status.GRAD_TOL

    return SolveResult(
        X=X, f=bdown.total, grad_norm=gn, status=status, iterations=it, trace=trace, entry_grads=cum
    )


def pair_gradient_sum(X, cfg, pair_indices):
    """Sum of per-entry data gradients over the given stored ordered pairs.

    Pair (i, j) contributes -(M_ij - <X_i, X_j>) * (e_i X_j^T + e_j X_i^T);
    summing over every stored pair reproduces the full data gradient.
    """
    rows = cfg._rows[pair_indices]
    cols = cfg._cols[pair_indices]
    resid = cfg._vals[pair_indices] - np.einsum("ij,ij->i", X[rows], X[cols])
    G = np.zeros_like(X)
    np.add.at(G, rows, -resid[:, None] * X[cols])
    np.add.at(G, cols, -resid[:, None] * X[rows])
    return G


def stochastic_gradient(X, cfg, rng, batch):
    """Unbiased gradient estimate from `batch` pairs drawn with replacement.

    (|Omega| / batch) * sum of per-entry gradients, plus the exact weighted
    penalty gradient.
    """
    n = cfg.n_pairs
    idx = rng.integers(0, n, size=batch)
    G = pair_gradient_sum(X, cfg, idx) * (n / batch)
    if cfg.hyper.reg_weight > 0:
        G += cfg.hyper.reg_weight * reg_grad_cached(X, cfg)
    return G


def reg_grad_cached(X, cfg):
    # thin alias; kept separate so the estimator reads as data-part + penalty
    return obj.reg_gradient(X, cfg.hyper.alpha)


def sgd(cfg, scfg, X0):
    """Minibatch SGD with step base / (1 + decay * iter).

    Trace rows record the full objective and full gradient norm each
    iteration for diagnostics; only the sampled batch counts toward
    `cum_entry_grads`.
    """
    X = np.array(X0, dtype=float)
    grad_tol = _auto_grad_tol(cfg, X, scfg)
    batch = min(scfg.sgd.batch, cfg.n_pairs) if cfg.n_pairs else scfg.sgd.batch
    base = scfg.sgd.step_base
    if base is None:
        # deterministic step damped by sqrt(batch fraction): the estimator is
        # the (n/batch)-scaled pair sum, so the full-gradient step diverges
        # on small batches; at batch == n this recovers the GD step
        base = _auto_step0(cfg, X, None)
        if cfg.n_pairs:
            base *= math.sqrt(batch / cfg.n_pairs)
    decay = scfg.sgd.step_decay
    rng = substream(scfg.seed, "sgd")
    weight = cfg.hyper.reg_weight

    trace = Trace()
    bdown = obj.objective(X, cfg)
    G_full = obj.gradient(X, cfg)
    gn = float(np.linalg.norm(G_full))
    cum = 0
    trace.append(0, bdown, weight, gn, 0.0, cum)

    status = Status.MAX_ITERS
    it = 0
    for it in range(1, scfg.max_iters + 1):
        if gn <= grad_tol:
            status = Status.GRAD_TOL
            it -= 1
            break
        step = base / (1.0 + decay * (it - 1))
        G = stochastic_gradient(X, cfg, rng, batch)
        cum += batch
        X = X - step * G
        bdown = obj.objective(X, cfg)
        G_full = obj.gradient(X, cfg)
        gn = float(np.linalg.norm(G_full))
        trace.append(it, bdown, weight, gn, step, cum)
    else:
        if gn <= grad_tol:
            status = Status.GRAD_TOL

    return SolveResult(
        X=X, f=bdown.total, grad_norm=gn, status=status, iterations=it, trace=trace, entry_grads=cum
    )


def _ball_perturbation(rng, shape, radius):
    # uniform in the Frobenius ball of the given radius
    G = rng.standard_normal(shape)
    nrm = float(np.linalg.norm(G))
    if nrm == 0.0:
        return np.zeros(shape)
    u = rng.random() ** (1.0 / (shape[0] * shape[1]))
    return (radius * u / nrm) * G


def perturbed_gd(cfg, scfg, X0):
    """Gradient descent with saddle-escaping random perturbations.

    Runs Armijo GD; when the gradient norm falls to the trigger (and the
    cooldown has elapsed) it snapshots the iterate, kicks it by a uniform
    ball perturbation, and descends for a cooldown window.  A window that
    fails to improve on the snapshot is rolled back; if the snapshot already
    met grad_tol the rollback is final and the snapshot is returned.
    """
    X = np.array(X0, dtype=float)
    grad_tol = _auto_grad_tol(cfg, X, scfg)
    radius = scfg.perturb.radius if scfg.perturb.radius is not None else 10.0 * grad_tol
    trigger = (
        scfg.perturb.trigger_grad_norm
        if scfg.perturb.trigger_grad_norm is not None
        else 10.0 * grad_tol
    )
    trigger = max(trigger, grad_tol)
    cooldown = scfg.perturb.cooldown_iters
    step_init = _auto_step0(cfg, X, scfg.armijo.step0)
    n_pairs = cfg.n_pairs
    rng = substream(scfg.seed, "perturb")
    weight = cfg.hyper.reg_weight

    trace = Trace()
    bdown = obj.objective(X, cfg)
    cum = 0
    G = obj.gradient(X, cfg)
    cum += n_pairs
    gn = float(np.linalg.norm(G))
    trace.append(0, bdown, weight, gn, 0.0, cum)

    snapshot = None  # (X, bdown, final: bool, probe_start_iter)
    last_attempt_end = -(10**9)
    status = Status.MAX_ITERS
    it = 0
    t_prev = step_init
    final_X, final_bdown, final_gn = X, bdown, gn

    for it in range(1, scfg.max_iters + 1):
        if snapshot is not None and it - snapshot[4] >= cooldown:
            snap_X, snap_bdown, final, snap_t, _ = snapshot
            if _escaped(snap_bdown.total, bdown.total):
                snapshot = None  # escaped to a lower basin
            else:
                X, bdown, t_prev = snap_X, snap_bdown, snap_t
                G = obj.gradient(X, cfg)
                cum += n_pairs
                gn = float(np.linalg.norm(G))
                snapshot = None
                last_attempt_end = it
                if final:
                    status = Status.GRAD_TOL
                    final_X, final_bdown, final_gn = X, bdown, gn
                    break

        if snapshot is None and gn <= trigger and it - last_attempt_end >= cooldown:
            is_final = gn <= grad_tol
            snapshot = (X.copy(), bdown, is_final, t_prev, it)
            X = X + _ball_perturbation(rng, X.shape, radius)
            bdown = obj.objective(X, cfg)
            G = obj.gradient(X, cfg)
            cum += n_pairs
            gn = float(np.linalg.norm(G))
            trace.append(it, bdown, weight, gn, 0.0, cum)
            final_X, final_bdown, final_gn = X, bdown, gn
            continue

        hit = _armijo_step(cfg, X, bdown, G, gn * gn, 2.0 * t_prev, scfg.armijo)
        if hit is None:
            if snapshot is not None:
                snap_X, snap_bdown, final, snap_t, _ = snapshot
                if _escaped(snap_bdown.total, bdown.total):
                    # the probe already found a lower basin and bottomed out
                    # there; a rollback would discard the escape
                    status = Status.GRAD_TOL if gn <= grad_tol else Status.LINE_SEARCH_STALLED
                    final_X, final_bdown, final_gn = X, bdown, gn
                    break
                # a perturbed iterate that cannot descend: roll back and decide
                X, bdown, t_prev = snap_X, snap_bdown, snap_t
                G = obj.gradient(X, cfg)
                cum += n_pairs
                gn = float(np.linalg.norm(G))
                snapshot = None
                last_attempt_end = it
                if final:
                    status = Status.GRAD_TOL
                    final_X, final_bdown, final_gn = X, bdown, gn
                    break
                continue
            status = Status.GRAD_TOL if gn <= grad_tol else Status.LINE_SEARCH_STALLED
            final_X, final_bdown, final_gn = X, bdown, gn
            break
        t_prev, X, bdown = hit
        G = obj.gradient(X, cfg)
        cum += n_pairs
        gn = float(np.linalg.norm(G))
        trace.append(it, bdown, weight, gn, t_prev, cum)
        final_X, final_bdown, final_gn = X, bdown, gn
    else:
        if gn <= grad_tol and snapshot is None:
            status = Status.GRAD_TOL
        final_X, final_bdown, final_gn = X, bdown, gn

    return SolveResult(
        X=final_X,
        f=final_bdown.total,
        grad_norm=final_gn,
        status=status,
        iterations=it,
        trace=trace,
        entry_grads=cum,
    )


_SOLVERS = {
    Method.GD: gradient_descent,
    Method.SGD: sgd,
    Method.PERTURBED_GD: perturbed_gd,
}


def solve(cfg, scfg, X0):
    """Dispatch on scfg.method."""
    method = Method(scfg.method)
    return _SOLVERS[method](cfg, scfg, X0)
