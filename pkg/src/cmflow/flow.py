"""Explicit integration of h_t = log(sigma_k(W) f_eff), run classification and
bisection over the initial dilation.

f_eff is f itself, or f * exp(xi.x) for the normalized weighted flow.  The
functional J = -(1/(k+1)) int h sigma_k + int h / f_eff is tracked at every
accepted step and a step that raises it beyond a relative slack is rejected.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (BodyMetrics, SupportField, body_metrics, curvature_matrix, principal_radii,
                       steiner_point)
from .sphere import covariant_hessian, integrate
from .symfunc import binom, sigma_matrix, sigma_partial


class FlowConfigError(ValueError):
    pass


class ConvexityFault(ArithmeticError):
    """sigma_k(W) <= 0 somewhere, so the speed is undefined."""


class StepUnderflow(RuntimeError):
    """Every trial step down to dt_min was rejected."""


@dataclass
class FlowConfig:
    k: int
    f: np.ndarray
    weighted: bool = False
    xi: np.ndarray | None = None
    theta: float = 1.0
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    dt_max: float = 0.05
    tol_converge: float = 1e-6
    shrink_floor: float | None = None
    expand_ceiling: float | None = None
    max_time: float = 200.0
    max_steps: int = 500_000
    convexity_margin: float = 0.0
    # fraction of the explicit stability limit estimated from the linearised operator
    cfl: float = 0.8
    j_slack: float = 1e-9
    snapshot_every: int = 100
    snapshot_radii: bool = True
    # ball comparison and sign-of-speed tests that end a run before the thresholds
    early_classify: bool = True

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        if self.xi is not None:
            self.xi = np.asarray(self.xi, dtype=float)

    def validate(self, grid) -> None:
        if not 1 <= self.k <= grid.d:
            raise FlowConfigError(f"k={self.k} must lie in 1..{grid.d}")
        if self.f.shape != (grid.size,):
            raise FlowConfigError(f"f has shape {self.f.shape}, grid has {grid.size} nodes")
        if not np.all(self.f > 0):
            raise FlowConfigError("f must be positive")
        if self.weighted and (self.xi is None or self.xi.shape != (grid.n,)):
            raise FlowConfigError("weighted flow needs xi with one entry per ambient dimension")
        if self.theta <= 0:
            raise FlowConfigError("theta must be positive")
        for name in ("dt_init", "dt_min", "dt_max", "tol_converge", "max_time", "cfl"):
            if not getattr(self, name) > 0:
                raise FlowConfigError(f"{name} must be positive")
        if self.dt_min > self.dt_max:
            raise FlowConfigError("dt_min exceeds dt_max")
        if self.convexity_margin < 0:
            raise FlowConfigError("convexity_margin must be >= 0")

    def summary(self) -> dict:
        return {"k": self.k, "weighted": self.weighted,
                "xi": None if self.xi is None else [float(v) for v in self.xi],
                "theta": self.theta, "dt_init": self.dt_init, "dt_min": self.dt_min, "dt_max": self.dt_max,
                "tol_converge": self.tol_converge, "shrink_floor": self.shrink_floor,
                "expand_ceiling": self.expand_ceiling, "max_time": self.max_time, "max_steps": self.max_steps,
                "convexity_margin": self.convexity_margin, "cfl": self.cfl, "j_slack": self.j_slack,
                "snapshot_every": self.snapshot_every, "early_classify": self.early_classify}


@dataclass(eq=False)
class FlowState:
    t: float
    h: SupportField
    last_dt: float
    J: float
    speed_sup: float
    metrics: BodyMetrics | None = None
    speed: np.ndarray | None = field(default=None, repr=False)
    sigma: np.ndarray | None = field(default=None, repr=False)
    W: np.ndarray | None = field(default=None, repr=False)
    dt_next: float = 0.0
    streak: int = 0


@dataclass(eq=False)
class RunOutcome:
    classification: str
    reason: str
    final: FlowState
    snapshots: list
    theta: float
    steps: int
    rejections: dict
    j_trace: np.ndarray  # (steps+1, 2): t, J at every accepted state

    def j_violations(self, slack: float = 1e-9) -> int:
        J = self.j_trace[:, 1]
        return int(np.sum(J[1:] > J[:-1] + slack * (1 + np.abs(J[:-1]))))


@dataclass(eq=False)
class BisectionResult:
    theta_star: float
    window: tuple
    outcome: RunOutcome | None
    probes: list

    @property
    def converged(self) -> bool:
        return self.outcome is not None and self.outcome.classification == "converged"


def effective_density(cfg: FlowConfig, grid) -> np.ndarray:
    if cfg.weighted:
        return cfg.f * np.exp(grid.x @ cfg.xi)
    return cfg.f


@dataclass(eq=False)
class _Eval:
    W: np.ndarray
    sigma: np.ndarray
    speed: np.ndarray
    J: float
    convex: bool


class _Model:
    """Per-run cache of everything that does not depend on h."""

    def __init__(self, grid, cfg: FlowConfig):
        cfg.validate(grid)
        self.grid, self.cfg, self.k = grid, cfg, cfg.k
        self.f_eff = effective_density(cfg, grid)
        self.log_f = np.log(self.f_eff)
        self.inv_f = 1.0 / self.f_eff
        hs = grid.ops["hess"]
        self.row_abs = [[np.asarray(abs(H).sum(axis=1)).ravel() for H in row] for row in hs]

    def evaluate(self, h: np.ndarray, need_convex: bool = True) -> _Eval:
        field_ = SupportField(h, self.grid)
        W = curvature_matrix(field_)
        sig = sigma_matrix(W, self.k)
        if not np.all(sig > 0):
            raise ConvexityFault(f"sigma_{self.k} <= 0 at {int(np.sum(sig <= 0))} nodes")
        convex = True
        if need_convex:
            lam = principal_radii(W)
            convex = bool(np.all(lam[:, 0] > self.cfg.convexity_margin))
            for i in range(1, self.k):
                convex = convex and bool(np.all(sigma_matrix(W, i) > 0))
        speed = np.log(sig) + self.log_f
        J = -integrate(h * sig, self.grid) / (self.k + 1) + integrate(h * self.inv_f, self.grid)
        return _Eval(W, sig, speed, J, convex)

    def stable_dt(self, W: np.ndarray, sig: np.ndarray) -> float:
        """Heun stability limit from a Gershgorin bound on the linearised operator."""
        P = np.asarray(sigma_partial(W, self.k)) / sig[:, None, None]
        d = W.shape[-1]
        rho = np.abs(np.trace(P, axis1=1, axis2=2))
        for a in range(d):
            for b in range(d):
                rho = rho + np.abs(P[:, a, b]) * self.row_abs[a][b]
        return 2.0 / float(np.max(rho))

    def initial_state(self, h0: np.ndarray) -> FlowState:
        e = self.evaluate(h0)
        if not e.convex:
            raise FlowConfigError("initial support function is not strictly convex with the configured margin")
        return FlowState(t=0.0, h=SupportField(h0, self.grid), last_dt=0.0, J=e.J,
                         speed_sup=float(np.max(np.abs(e.speed))), speed=e.speed, sigma=e.sigma,
                         W=e.W, dt_next=self.cfg.dt_init, streak=0)

    def advance(self, state: FlowState, rejections: dict | None = None) -> FlowState:
        cfg = self.cfg
        h0 = state.h.h
        s0 = state.speed
        W0 = state.W if state.W is not None else curvature_matrix(state.h)
        dt = min(state.dt_next, cfg.dt_max, cfg.cfl * self.stable_dt(W0, state.sigma))
        remaining = cfg.max_time - state.t
        if cfg.dt_min < remaining < dt:
            dt = remaining
        slack = cfg.j_slack * (1 + abs(state.J))
        rejected = False
        while True:
            if dt < cfg.dt_min:
                raise StepUnderflow(f"step rejected down to dt={dt:.3e} at t={state.t:.6g}")
            why = None
            try:
                e1 = self.evaluate(h0 + dt * s0, need_convex=False)
                h2 = h0 + 0.5 * dt * (s0 + e1.speed)
                e2 = self.evaluate(h2)
                if not e2.convex:
                    why = "convexity"
                elif e2.J > state.J + slack:
                    why = "functional"
            except ConvexityFault:
                why = "convexity"
            if why is None:
                break
            if rejections is not None:
                rejections[why] = rejections.get(why, 0) + 1
            dt *= 0.5
            rejected = True
        streak = 1 if rejected else state.streak + 1
        dt_next = dt if rejected else state.dt_next
        if streak >= 5:
            dt_next, streak = min(1.2 * dt_next, cfg.dt_max), 0
        return FlowState(t=state.t + dt, h=SupportField(h2, self.grid), last_dt=dt, J=e2.J,
                         speed_sup=float(np.max(np.abs(e2.speed))), speed=e2.speed, sigma=e2.sigma,
                         W=e2.W, dt_next=dt_next, streak=streak)


def speed(h: SupportField, cfg: FlowConfig) -> np.ndarray:
    """Normal speed log(sigma_k(W) f_eff) per node; raises ConvexityFault if sigma_k <= 0."""
    return _Model(h.grid, cfg).evaluate(h.h, need_convex=False).speed


def functional_J(h: SupportField, cfg: FlowConfig) -> float:
    from .geometry import GammaConeError
    W = curvature_matrix(h)
    for i in range(1, cfg.k + 1):
        if not np.all(sigma_matrix(W, i) > 0):
            raise GammaConeError(f"W leaves Gamma_{cfg.k}")
    try:
        return _Model(h.grid, cfg).evaluate(h.h, need_convex=False).J
    except ConvexityFault as exc:
        raise GammaConeError(str(exc)) from exc


def step(state: FlowState, cfg: FlowConfig) -> FlowState:
    """One accepted Heun step (halving dt on rejection)."""
    model = _Model(state.h.grid, cfg)
    if state.speed is None or state.sigma is None:
        e = model.evaluate(state.h.h)
        state = replace(state, speed=e.speed, sigma=e.sigma)
    if state.dt_next <= 0:
        state = replace(state, dt_next=cfg.dt_init)
    return model.advance(state)


def w11_at(h: SupportField, cfg: FlowConfig, node: int, direction) -> float:
    """Second derivative of log f_eff along ``direction`` plus log f_eff + log sigma_k at ``node``."""
    f_eff = effective_density(cfg, h.grid)
    logf = np.log(f_eff)
    H = covariant_hessian(logf, h.grid)[node]
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    sig = sigma_matrix(curvature_matrix(h)[node], cfg.k)
    return float(e @ H @ e + logf[node] + math.log(sig))


def w11_diagnostic(h: SupportField, cfg: FlowConfig) -> float:
    """Evaluate w11_at at the node and direction of the smallest principal radius."""
    W = curvature_matrix(h)
    lam, vec = np.linalg.eigh(W)
    node = int(np.argmin(lam[:, 0]))
    return w11_at(h, cfg, node, vec[node, :, 0])


def ball_threshold(d: int, k: int, density: float) -> float:
    """Radius of the steady ball for constant f_eff = density."""
    return (binom(d, k) * density) ** (-1.0 / k)


def _snapshot(model: _Model, state: FlowState, with_radii: bool) -> dict:
    cfg = model.cfg
    m = body_metrics(state.h, cfg.k, with_radii=with_radii)
    state.metrics = m
    dJdt = -integrate((state.sigma - model.inv_f) * state.speed, model.grid)
    return {"t": state.t, "dt": state.last_dt, "J": state.J, "speed_sup": state.speed_sup,
            "h_min": float(state.h.h.min()), "h_max": float(state.h.h.max()),
            "r": m.r if with_radii else None, "R": m.R if with_radii else None,
            "sigma_min": m.sigma_min, "sigma_max": m.sigma_max,
            "lambda_max": m.lambda_max, "w11": w11_diagnostic(state.h, cfg),
            "steiner": [float(v) for v in m.steiner], "quermass": m.quermass, "dJdt": float(dJdt)}


def run(h0: SupportField, cfg: FlowConfig) -> RunOutcome:
    """Evolve theta*h0 until it converges, shrinks, expands or stalls."""
    grid = h0.grid
    model = _Model(grid, cfg)
    h_init = cfg.theta * h0.h
    floor = cfg.shrink_floor if cfg.shrink_floor is not None else 0.05 * float(h_init.min())
    ceiling = cfg.expand_ceiling if cfg.expand_ceiling is not None else 20.0 * float(h_init.max())
    if not floor < h_init.min() < ceiling:
        raise FlowConfigError(f"need shrink_floor {floor} < min h {h_init.min()} < expand_ceiling {ceiling}")
    rho_out = ball_threshold(grid.d, cfg.k, float(model.f_eff.min()))
    rho_in = ball_threshold(grid.d, cfg.k, float(model.f_eff.max()))

    state = model.initial_state(h_init)
    snapshots = [_snapshot(model, state, cfg.snapshot_radii)]
    trace = [(0.0, state.J)]
    rejections: dict = {}
    steps = 0
    classification, reason = None, ""
    while classification is None:
        if state.speed_sup < cfg.tol_converge:
            classification, reason = "converged", "sup|h_t| below tolerance"
            break
        hmin, hmax = float(state.h.h.min()), float(state.h.h.max())
        if hmin < floor:
            classification, reason = "shrank", "min h below shrink_floor"
            break
        if hmax > ceiling:
            classification, reason = "expanded", "max h above expand_ceiling"
            break
        if cfg.early_classify:
            centred = state.h.h - grid.x @ steiner_point(state.h)
            if centred.min() > rho_out * (1 + 1e-6):
                classification, reason = "expanded", "contains an expanding ball"
                break
            if centred.max() < rho_in * (1 - 1e-6):
                classification, reason = "shrank", "inside a shrinking ball"
                break
            if state.speed.min() > 0:
                classification, reason = "expanded", "speed positive everywhere"
                break
            if state.speed.max() < 0:
                classification, reason = "shrank", "speed negative everywhere"
                break
        if steps >= cfg.max_steps:
            classification, reason = "stalled", "max_steps reached"
            break
        if state.t >= cfg.max_time * (1 - 1e-12):
            classification, reason = "stalled", "max_time reached"
            break
        try:
            state = model.advance(state, rejections)
        except StepUnderflow:
            if float(np.mean(state.speed)) < 0:
                classification, reason = "shrank", "convexity persistently lost while contracting"
            else:
                classification, reason = "stalled", "time step underflow"
            break
        steps += 1
        trace.append((state.t, state.J))
        if cfg.snapshot_every and steps % cfg.snapshot_every == 0:
            snapshots.append(_snapshot(model, state, cfg.snapshot_radii))
    if snapshots[-1]["t"] != state.t or len(snapshots) == 1:
        snapshots.append(_snapshot(model, state, cfg.snapshot_radii))
    elif state.metrics is None:
        state.metrics = body_metrics(state.h, cfg.k, with_radii=cfg.snapshot_radii)
    return RunOutcome(classification=classification, reason=reason, final=state, snapshots=snapshots,
                      theta=cfg.theta, steps=steps, rejections=rejections, j_trace=np.array(trace))


def _probe(args):
    h0, cfg = args
    return run(h0, cfg)


def theta_bisection(h0: SupportField, cfg: FlowConfig, theta_lo: float, theta_hi: float,
                    rel_window: float = 1e-3, jobs: int = 1) -> BisectionResult:
    """Bracket the critical dilation between a shrinking and an expanding run.

    Stops at the first converged probe or once the bracket is narrower than
    rel_window * theta_lo.  With jobs > 1 each round probes ``jobs`` interior
    points in parallel processes.
    """
    if not 0 < theta_lo < theta_hi:
        raise FlowConfigError("need 0 < theta_lo < theta_hi")
    probes = []

    def record(out):
        probes.append({"theta": out.theta, "classification": out.classification, "reason": out.reason,
                       "t_end": out.final.t, "steps": out.steps, "rejections": dict(out.rejections),
                       "j_violations": out.j_violations(cfg.j_slack)})
        return out

    def run_many(thetas):
        cfgs = [replace(cfg, theta=float(t)) for t in thetas]
        if jobs > 1 and len(thetas) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                outs = list(ex.map(_probe, [(h0, c) for c in cfgs]))
        else:
            outs = [run(h0, c) for c in cfgs]
        return [record(o) for o in outs]

    lo_out, hi_out = run_many([theta_lo, theta_hi])
    for out in (lo_out, hi_out):
        if out.classification == "converged":
            return BisectionResult(out.theta, (theta_lo, theta_hi), out, probes)
    if lo_out.classification != "shrank" or hi_out.classification != "expanded":
        raise FlowConfigError(f"theta_lo={theta_lo} gave {lo_out.classification}, "
                              f"theta_hi={theta_hi} gave {hi_out.classification}; need shrank/expanded")
    lo, hi = theta_lo, theta_hi
    last = None
    while hi - lo >= rel_window * lo:
        m = max(1, jobs)
        thetas = [lo + (hi - lo) * (i + 1) / (m + 1) for i in range(m)]
        outs = run_many(thetas)
        for out in outs:
            if out.classification == "converged":
                return BisectionResult(out.theta, (lo, hi), out, probes)
            if out.classification == "stalled":
                return BisectionResult(out.theta, (lo, hi), out, probes)
        new_lo, new_hi = lo, hi
        for out in outs:
            if out.classification == "shrank":
                new_lo = max(new_lo, out.theta)
        for out in outs:
            if out.classification == "expanded" and out.theta > new_lo:
                new_hi = min(new_hi, out.theta)
        lo, hi = new_lo, new_hi
        last = outs[-1]
    return BisectionResult(0.5 * (lo + hi), (lo, hi), last, probes)
