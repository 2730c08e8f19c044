"""Experiment harnesses: single paths, relaxation families, ensembles.

The relaxation study advances every family member through the identical
Brownian path (same stream key, same substream layout), so differences
between members isolate the penalty parameter.  The smallest epsilon acts
as the reference trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import (
    CoveringSet,
    RunTrace,
    StopState,
    energy_identity_residual,
    energy_report,
)
from .grid import DirectorField, VelocityField, sobolev_norm
from .noise import NoiseModel, sample_increment
from .operators import GLParams, cross3
from .stepper import SimState, StepperConfig, required_level, step

__all__ = [
    "NumericsError",
    "run_path",
    "run_coupled_family",
    "run_ensemble",
    "fit_rate",
    "RateFit",
    "ConvergenceReport",
    "EnsembleReport",
    "resolve_stop_delta",
]


class NumericsError(RuntimeError):
    """A state stopped being finite."""


def resolve_stop_delta(delta, initial_energy: float) -> float:
    """'auto' concentration threshold: 5% of the initial energy, floored."""
    if delta is None or delta == "auto":
        return max(0.05 * initial_energy, 1e-3)
    return float(delta)


def _check_finite(report, t):
    if not (np.isfinite(report.energy_E) and np.isfinite(report.max_abs_n)):
        raise NumericsError(f"state lost finiteness at t={t:.6g}")


def run_path(state0: SimState, cfg: StepperConfig, gl: GLParams, noise: NoiseModel,
             covering: CoveringSet | None = None, stop_delta="auto",
             on_report=None) -> RunTrace:
    """Advance one path to t_end, collecting a per-step report trace."""
    trace = RunTrace(trace_q_eff=noise.trace_q if noise.velocity_on else 0.0)
    rep = energy_report(state0, gl, covering)
    _check_finite(rep, state0.t)
    if covering is not None:
        trace.stop = StopState(delta=resolve_stop_delta(stop_delta, rep.energy_E),
                               radius=covering.radius, horizon=cfg.t_end)
    trace.append(rep, None)
    if on_report is not None:
        on_report(state0, rep)
    state = state0
    for _ in range(max(0, cfg.n_steps - state0.step)):
        state, ledger = step(state, cfg, gl, noise)
        rep = energy_report(state, gl, covering)
        _check_finite(rep, state.t)
        trace.append(rep, ledger)
        if on_report is not None:
            on_report(state, rep)
    return trace


# -- log-log rate fitting ------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    rate: float
    intercept: float
    half_width: float
    n_points: int


def fit_rate(xs, ys) -> RateFit:
    """Least-squares slope of log y against log x (y ~ C x^rate).

    half_width is two standard errors of the slope (0 when dof <= 0).
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if len(xs) < 2 or len(xs) != len(ys):
        raise ValueError("fit_rate needs matching arrays of >= 2 points")
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("fit_rate needs positive data")
    lx, ly = np.log(xs), np.log(ys)
    a = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(a, ly, rcond=None)
    dof = len(xs) - 2
    if dof > 0 and res.size:
        var = float(res[0]) / dof / float(np.sum((lx - lx.mean()) ** 2))
        hw = 2.0 * float(np.sqrt(var))
    else:
        hw = 0.0
    return RateFit(rate=float(coef[0]), intercept=float(coef[1]),
                   half_width=hw, n_points=len(xs))


# -- coupled relaxation family ---------------------------------------------------

@dataclass
class MemberStats:
    """Per-epsilon outcomes across paths (index = path)."""

    epsilon: float
    sup_dist: np.ndarray
    l2_dist: np.ndarray
    defect_sup: np.ndarray
    residual_ito: np.ndarray
    residual_strat: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    max_abs_n: np.ndarray


@dataclass
class ConvergenceReport:
    eps_family: tuple
    eps_ref: float
    alpha: float
    dt: float
    t_end: float
    n_paths: int
    n_modes: int
    tau: np.ndarray
    members: dict
    rate_sup: RateFit | None
    rate_l2: RateFit | None
    rate_defect: RateFit | None

    def to_text(self) -> str:
        out = ["relaxation family report"]
        out.append(f"eps_family = {', '.join(f'{e:.17g}' for e in self.eps_family)}")
        out.append(f"eps_ref = {self.eps_ref:.17g}  alpha = {self.alpha:.17g}")
        out.append(f"n_modes = {self.n_modes}  dt = {self.dt:.17g}  t_end = {self.t_end:.17g}  paths = {self.n_paths}")
        out.append("tau = " + ", ".join(f"{v:.17g}" for v in self.tau))
        for eps in self.eps_family:
            m = self.members[eps]
            out.append(f"[eps = {eps:.17g}]")
            for label, arr in [
                ("sup_dist", m.sup_dist), ("l2_dist", m.l2_dist),
                ("defect_sup", m.defect_sup), ("residual_ito", m.residual_ito),
                ("residual_strat", m.residual_strat),
                ("sigma1", m.sigma1), ("sigma2", m.sigma2),
            ]:
                out.append(f"  {label} = " + ", ".join(f"{v:.17g}" for v in arr))
        for label, fitted in [("rate_sup", self.rate_sup), ("rate_l2", self.rate_l2),
                              ("rate_defect", self.rate_defect)]:
            if fitted is not None:
                out.append(f"{label}: rate = {fitted.rate:.17g} +- {fitted.half_width:.17g}"
                           f" (intercept {fitted.intercept:.17g}, {fitted.n_points} pts)")
        return "\n".join(out) + "\n"


def _limit_residual_terms(grid, state: SimState, h: DirectorField | None):
    """Drift of the limit equation at one state: lap n + |grad n|^2 n - u.grad n."""
    n_spec = state.n.spec
    lap = grid.to_phys(grid.laplacian(n_spec))
    d1 = grid.to_phys(grid.deriv(n_spec, 1))
    d2 = grid.to_phys(grid.deriv(n_spec, 2))
    grad_sq = np.sum(d1 * d1 + d2 * d2, axis=0)
    conv = state.u.phys[0] * d1 + state.u.phys[1] * d2
    drift = lap + grad_sq * state.n.phys - conv
    if h is None:
        return drift, None, None
    nxh = cross3(state.n.phys, h.phys)
    return drift, nxh, 0.5 * cross3(nxh, h.phys)


def run_coupled_family(state0: SimState, cfg: StepperConfig, eps_family,
                       noise_base: NoiseModel, n_paths: int, alpha: float = 1.0,
                       covering: CoveringSet | None = None, stop_delta="auto",
                       on_member_report=None) -> ConvergenceReport:
    """Pathwise-coupled relaxation study against the smallest-epsilon member.

    ``on_member_report(path_index, epsilon, report)``, when given, observes
    every per-step diagnostic row of every family member.
    """
    eps_family = tuple(float(e) for e in eps_family)
    if len(set(eps_family)) != len(eps_family):
        raise ValueError("eps_family entries must be distinct")
    eps_ref = min(eps_family)
    grid = state0.grid
    n_steps = cfg.n_steps
    stats = {eps: MemberStats(
        epsilon=eps,
        sup_dist=np.zeros(n_paths), l2_dist=np.zeros(n_paths),
        defect_sup=np.zeros(n_paths), residual_ito=np.zeros(n_paths),
        residual_strat=np.zeros(n_paths),
        sigma1=np.full(n_paths, np.inf), sigma2=np.full(n_paths, np.inf),
        max_abs_n=np.zeros(n_paths),
    ) for eps in eps_family}
    tau = np.full(n_paths, cfg.t_end)

    for p in range(n_paths):
        noise = replace(noise_base, path_id=noise_base.path_id + p)
        members = {}
        for eps in eps_family:
            gl = GLParams(epsilon=eps)
            rep = energy_report(state0, gl, covering)
            trace = RunTrace(trace_q_eff=noise.trace_q if noise.velocity_on else 0.0)
            if covering is not None:
                trace.stop = StopState(delta=resolve_stop_delta(stop_delta, rep.energy_E),
                                       radius=covering.radius, horizon=cfg.t_end)
            trace.append(rep, None)
            if on_member_report is not None:
                on_member_report(p, eps, rep)
            members[eps] = {"gl": gl, "state": state0, "trace": trace,
                            "sup": 0.0, "l2": 0.0, "l2_prev": 0.0,
                            "defect": rep.eps_defect * eps,
                            "res_ito": 0.0, "res_strat": 0.0}
        accum_until = cfg.t_end

        for _ in range(n_steps):
            level = max(required_level(m["state"], cfg) for m in members.values())
            inc = sample_increment(noise, cfg.dt, members[eps_ref]["state"].step) \
                if level == 0 else None
            for eps in eps_family:
                m = members[eps]
                prev = m["state"]
                new_state, ledger = step(prev, cfg, m["gl"], noise, force_level=level)
                rep = energy_report(new_state, m["gl"], covering)
                _check_finite(rep, new_state.t)
                m["trace"].append(rep, ledger)
                if on_member_report is not None:
                    on_member_report(p, eps, rep)
                if inc is not None and prev.t <= accum_until:
                    drift, nxh, strat = _limit_residual_terms(grid, prev, noise.h)
                    r = (new_state.n.phys - prev.n.phys) - cfg.dt * drift
                    if noise.director_on and nxh is not None:
                        r = r - inc.d_eta * nxh
                        r2 = r - cfg.dt * strat
                    else:
                        r2 = r
                    m["res_ito"] += grid.l2_norm_phys(r)
                    m["res_strat"] += grid.l2_norm_phys(r2)
                m["state"] = new_state
            t_now = members[eps_ref]["state"].t
            sigma_now = min(m["trace"].stop.sigma if m["trace"].stop else cfg.t_end
                            for m in members.values())
            accum_until = min(accum_until, sigma_now)
            if t_now <= accum_until:
                ref_state = members[eps_ref]["state"]
                for eps in eps_family:
                    m = members[eps]
                    m["defect"] = max(m["defect"],
                                      m["trace"].reports[-1].eps_defect * eps)
                    if eps == eps_ref:
                        continue
                    du = VelocityField(grid, spec=m["state"].u.spec - ref_state.u.spec)
                    dn = DirectorField(grid, spec=m["state"].n.spec - ref_state.n.spec)
                    d_low = sobolev_norm(du, alpha - 1.0, homogeneous=True) \
                        + sobolev_norm(dn, alpha, homogeneous=False)
                    m["sup"] = max(m["sup"], d_low)
                    d_high_sq = sobolev_norm(du, alpha, homogeneous=True) ** 2 \
                        + sobolev_norm(dn, 1.0 + alpha, homogeneous=False) ** 2
                    m["l2"] += 0.5 * cfg.dt * (m["l2_prev"] + d_high_sq)
                    m["l2_prev"] = d_high_sq

        tau[p] = min(m["trace"].stop.sigma if m["trace"].stop else cfg.t_end
                     for m in members.values())
        for eps in eps_family:
            m = members[eps]
            s = stats[eps]
            s.sup_dist[p] = m["sup"]
            s.l2_dist[p] = np.sqrt(m["l2"])
            s.defect_sup[p] = m["defect"]
            s.residual_ito[p] = m["res_ito"]
            s.residual_strat[p] = m["res_strat"]
            if m["trace"].stop is not None:
                s.sigma1[p] = m["trace"].stop.t_sigma1
                s.sigma2[p] = m["trace"].stop.t_sigma2
            s.max_abs_n[p] = m["trace"].max_abs_n()

    non_ref = [e for e in eps_family if e != eps_ref]
    rate_sup = rate_l2 = rate_defect = None
    try:
        if len(non_ref) >= 2:
            rate_sup = fit_rate(non_ref, [float(np.mean(stats[e].sup_dist)) for e in non_ref])
            rate_l2 = fit_rate(non_ref, [float(np.mean(stats[e].l2_dist)) for e in non_ref])
        if len(eps_family) >= 2:
            rate_defect = fit_rate(eps_family,
                                   [float(np.mean(stats[e].defect_sup)) for e in eps_family])
    except ValueError:
        pass  # zero distances (e.g. family of identical members) have no rate
    return ConvergenceReport(
        eps_family=eps_family, eps_ref=eps_ref, alpha=alpha, dt=cfg.dt,
        t_end=cfg.t_end, n_paths=n_paths, n_modes=grid.n_modes, tau=tau,
        members=stats, rate_sup=rate_sup, rate_l2=rate_l2, rate_defect=rate_defect,
    )


# -- independent ensembles -----------------------------------------------------

@dataclass
class EnsembleReport:
    n_paths: int
    t_end: float
    trace_q: float
    sup_energy: np.ndarray          # per path
    int_dissipation: np.ndarray     # per path, int_0^T D
    balance: np.ndarray             # per path ensemble-balance statistic
    residual: np.ndarray            # per path pathwise residual at T
    max_abs_n: float
    mean_energy_final: float

    @property
    def mean_sup_energy(self) -> float:
        return float(np.mean(self.sup_energy))

    @property
    def mean_sup_energy_sq(self) -> float:
        return float(np.mean(self.sup_energy**2))

    @property
    def balance_mean(self) -> float:
        return float(np.mean(self.balance))

    @property
    def balance_se(self) -> float:
        return float(np.std(self.balance, ddof=1) / np.sqrt(len(self.balance)))

    def to_text(self) -> str:
        lines = [
            "ensemble report",
            f"paths = {self.n_paths}  t_end = {self.t_end:.17g}  TrQ = {self.trace_q:.17g}",
            f"E[sup E] = {self.mean_sup_energy:.17g}",
            f"E[(sup E)^2] = {self.mean_sup_energy_sq:.17g}",
            f"E[int D] = {float(np.mean(self.int_dissipation)):.17g}",
            f"E[E(T)] = {self.mean_energy_final:.17g}",
            f"balance mean = {self.balance_mean:.17g}  se = {self.balance_se:.17g}",
            f"pathwise residual mean = {float(np.mean(self.residual)):.17g}",
            f"max |n| over ensemble = {self.max_abs_n:.17g}",
        ]
        return "\n".join(lines) + "\n"


def run_ensemble(state0: SimState, cfg: StepperConfig, gl: GLParams,
                 noise_base: NoiseModel, n_paths: int,
                 covering: CoveringSet | None = None, stop_delta="auto") -> EnsembleReport:
    """Independent paths (path_id offsets) from shared initial data."""
    sup_e = np.zeros(n_paths)
    int_d = np.zeros(n_paths)
    balance = np.zeros(n_paths)
    residual = np.zeros(n_paths)
    e_final = np.zeros(n_paths)
    max_n = 0.0
    for p in range(n_paths):
        noise = replace(noise_base, path_id=noise_base.path_id + p)
        trace = run_path(state0, cfg, gl, noise, covering=covering, stop_delta=stop_delta)
        e = trace.field_array("energy_E")
        sup_e[p] = float(np.max(e))
        e_final[p] = float(e[-1])
        int_d[p] = float(trace.int_dissipation()[-1])
        res = energy_identity_residual(trace)[-1]
        residual[p] = res
        balance[p] = res + 2.0 * trace.cum_u_dw[-1] + 2.0 * trace.cum_grad_cross[-1]
        max_n = max(max_n, trace.max_abs_n())
    return EnsembleReport(
        n_paths=n_paths, t_end=cfg.t_end,
        trace_q=noise_base.trace_q if noise_base.velocity_on else 0.0,
        sup_energy=sup_e, int_dissipation=int_d, balance=balance,
        residual=residual, max_abs_n=max_n,
        mean_energy_final=float(np.mean(e_final)),
    )
