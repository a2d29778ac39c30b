"""Randomised verification suites: dynamic program vs. path enumeration, and
analytic vs. finite-difference gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alignment import estimate_map_alignment
from .ctc import ctc_gradient, lattice_for
from .losses import DctcConfig, dctc_loss
from .oracle import enumerate_paths, finite_difference_grad, oracle_map_alignment, oracle_posterior_ratio
from .types import LabelSequence, softmax_columns

# two posterior ratios closer than this count as tied
TIE_TOL = 1e-9


@dataclass(frozen=True)
class Instance:
    seed: int
    U: np.ndarray
    y: LabelSequence


def random_instance(seed: int, K_range=(1, 3), T_range=(2, 6), L_range=(1, 3), scale: float = 2.0) -> Instance:
    rng = np.random.default_rng(seed)
    K = int(rng.integers(K_range[0], K_range[1] + 1))
    T = int(rng.integers(T_range[0], T_range[1] + 1))
    L = int(rng.integers(L_range[0], L_range[1] + 1))
    U = rng.normal(scale=scale, size=(K + 1, T))
    y = LabelSequence(tuple(int(c) for c in rng.integers(1, K + 1, size=L)))
    return Instance(seed, U, y)


@dataclass
class CheckReport:
    tol_loss: float = 1e-9
    tol_fd: float = 1e-4
    n_instances: int = 0
    n_feasible: int = 0
    n_dctc_checked: int = 0
    max_loss_err: float = 0.0
    max_gamma_err: float = 0.0
    max_norm_err: float = 0.0
    max_fd_rel_err: float = 0.0
    max_dctc_fd_rel_err: float = 0.0
    map_mismatches: int = 0
    map_compared: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        out = [
            f"instances\t{self.n_instances}",
            f"feasible\t{self.n_feasible}",
            f"max_loss_abs_err\t{self.max_loss_err:.3e}",
            f"max_posterior_abs_err\t{self.max_gamma_err:.3e}",
            f"max_posterior_norm_err\t{self.max_norm_err:.3e}",
            f"map_timesteps_compared\t{self.map_compared}",
            f"map_mismatches\t{self.map_mismatches}",
            f"max_fd_rel_err\t{self.max_fd_rel_err:.3e}",
            f"dctc_instances_checked\t{self.n_dctc_checked}",
            f"max_dctc_fd_rel_err\t{self.max_dctc_fd_rel_err:.3e}",
        ]
        out += [f"FAIL\tseed={seed}\t{what}" for seed, what in self.failures]
        out.append("PASS" if self.ok else "FAIL")
        return out


def rel_err(approx: np.ndarray, exact: np.ndarray) -> float:
    """Max-norm error relative to the max-norm of ``exact``."""
    return float(np.max(np.abs(approx - exact)) / max(1e-8, float(np.max(np.abs(exact)))))


def check_instance(inst: Instance, report: CheckReport, step: float = 1e-5, fd: bool = True) -> None:
    P = softmax_columns(inst.U)
    lat = lattice_for(P, inst.y)
    enum = enumerate_paths(P, inst.y)
    report.n_instances += 1

    p_dp = np.exp(lat.log_prob)
    err = abs(p_dp - enum.total_prob)
    report.max_loss_err = max(report.max_loss_err, err)
    if err > report.tol_loss:
        report.failures.append((inst.seed, f"path-sum mismatch {err:.3e}"))
    if not lat.feasible:
        if enum.total_prob != 0.0:
            report.failures.append((inst.seed, "DP says infeasible but paths exist"))
        return
    report.n_feasible += 1

    post = np.exp(lat.gamma)
    gerr = float(np.max(np.abs(enum.per_timestep_mass / enum.total_prob - post)))
    nerr = float(np.max(np.abs(post.sum(axis=0) - 1.0)))
    report.max_gamma_err = max(report.max_gamma_err, gerr)
    report.max_norm_err = max(report.max_norm_err, nerr)
    if gerr > report.tol_loss or nerr > report.tol_loss:
        report.failures.append((inst.seed, f"posterior mismatch {gerr:.3e} / normalisation {nerr:.3e}"))

    z = estimate_map_alignment(P, lat)
    ratio = oracle_posterior_ratio(enum, P)
    z_ref = oracle_map_alignment(enum, P)
    for t in range(P.T):
        top = np.sort(ratio[:, t])[::-1]
        if len(top) > 1 and top[0] - top[1] <= TIE_TOL * max(1.0, top[0]):
            continue
        report.map_compared += 1
        if z.ids[t] != z_ref.ids[t]:
            report.map_mismatches += 1
            report.failures.append((inst.seed, f"MAP mismatch at t={t}: {z.ids[t]} vs {z_ref.ids[t]}"))

    if not fd:
        return
    G = ctc_gradient(P, lat)
    g_fd = finite_difference_grad(inst.U, inst.y, step=step)
    e = rel_err(g_fd, G)
    report.max_fd_rel_err = max(report.max_fd_rel_err, e)
    if e > report.tol_fd:
        report.failures.append((inst.seed, f"CTC gradient vs finite differences {e:.3e}"))

    e = check_dctc_gradient(inst, step)
    if e is not None:
        report.n_dctc_checked += 1
        report.max_dctc_fd_rel_err = max(report.max_dctc_fd_rel_err, e)
        if e > report.tol_fd:
            report.failures.append((inst.seed, f"DCTC gradient vs finite differences {e:.3e}"))


def check_dctc_gradient(inst: Instance, step: float = 1e-5, lam: float = DctcConfig().lam) -> float | None:
    """Relative FD error of the DCTC gradient, or None if any probe moves z*."""
    cfg = DctcConfig(lam)
    base = dctc_loss(inst.U, inst.y, cfg=cfg)
    if not base.feasible:
        return None
    stable = True

    def total(V):
        nonlocal stable
        out = dctc_loss(V, inst.y, cfg=cfg)
        if out.alignment.ids != base.alignment.ids:
            stable = False
        return out.loss.total

    g_fd = finite_difference_grad(inst.U, inst.y, step=step, loss=total)
    if not stable:
        return None
    return rel_err(g_fd, base.grad_u)


def run_gradcheck(instances: int = 200, seed: int = 0, step: float = 1e-5, tol_loss: float = 1e-9,
                  tol_fd: float = 1e-4, fd: bool = True) -> CheckReport:
    report = CheckReport(tol_loss=tol_loss, tol_fd=tol_fd)
    for i in range(instances):
        check_instance(random_instance(seed * 1_000_003 + i), report, step=step, fd=fd)
    return report
