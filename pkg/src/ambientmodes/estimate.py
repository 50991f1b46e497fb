"""Recovery of the closed-loop state matrix from sampled angle/speed data.

A stationary linear SDE dx = A x dt + S dW satisfies the regression
identity dR(tau)/dtau = A R(tau), hence R(tau) = exp(A tau) C with C the
stationary covariance.  Sample versions of C and R(tau) therefore yield

    A_hat = log(R_hat(tau) C_hat^{-1}) / (tau_steps * dt)

with the principal matrix logarithm.  Estimation defaults to
reference-reduced coordinates (angles measured against one machine),
where the process is actually stationary; full coordinates random-walk
along the uniform-angle-shift direction and require an explicit ridge.
"""

import warnings
import numpy as np
from dataclasses import dataclass, field, replace
from scipy.linalg import logm

from .errors import BranchCutError, ConditioningError, NonstationaryWarning
from .linearize import FULL, REFERENCE_REDUCED

BRANCH_TOL = 1e-8      # angular distance to the negative real axis
COND_MAX = 1e14


@dataclass(frozen=True)
class SampleStats:
    """Sample covariance and lag correlation over the stacked state channels."""

    c_hat: np.ndarray
    r_hat: np.ndarray
    tau_steps: int
    dt: float
    n_samples: int

    def __post_init__(self):
        if self.c_hat.shape != self.r_hat.shape or self.c_hat.ndim != 2:
            raise ValueError("c_hat and r_hat must be square matrices of equal size")
        if self.tau_steps < 1:
            raise ValueError("tau_steps must be >= 1")
        if self.n_samples <= self.tau_steps:
            raise ValueError("need more samples than lag steps")
        asym = np.abs(self.c_hat - self.c_hat.T).max()
        if asym > 1e-12 * max(np.abs(self.c_hat).max(), 1.0):
            raise ValueError("c_hat must be symmetric")


@dataclass(frozen=True)
class EstimatorConfig:
    tau_steps: int = 1
    ridge: float = 0.0          # added to the covariance diagonal
    coords: str = REFERENCE_REDUCED
    ref_machine: int = 0
    normalization: str = "biased"   # "biased" (1/N) or "unbiased" (1/(N-tau))
    detrend: bool = False

    def __post_init__(self):
        if self.tau_steps < 1 or self.ridge < 0:
            raise ValueError("tau_steps must be >= 1 and ridge nonnegative")
        if self.normalization not in ("biased", "unbiased"):
            raise ValueError("normalization must be 'biased' or 'unbiased'")


@dataclass(frozen=True)
class EstimateResult:
    a_hat: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    state_labels: tuple = ()


def to_relative(traj, ref=0):
    """Re-express angle channels relative to the reference machine.

    Drops the reference angle column; a trajectory that already has one
    angle channel fewer than its speed channels is passed through.
    """
    n_ang, n_spd = traj.delta.shape[1], traj.omega.shape[1]
    if n_ang == n_spd - 1:
        return traj
    if n_ang != n_spd:
        raise ValueError("trajectory has inconsistent angle/speed channel counts")
    keep = [i for i in range(n_ang) if i != ref]
    delta = traj.delta[:, keep] - traj.delta[:, [ref]]
    return replace(traj, delta=delta)


def _centered(traj, detrend):
    x = traj.state_array()
    x = x - x.mean(axis=0)
    if detrend:
        t = np.arange(x.shape[0]) - (x.shape[0] - 1) / 2.0
        x = x - np.outer(t, (t @ x) / (t @ t))
    return x


def sample_covariance(traj, detrend=False):
    """Mean-removed, 1/N-normalized covariance, symmetrized."""
    x = _centered(traj, detrend)
    c = x.T @ x / x.shape[0]
    return 0.5 * (c + c.T)


def sample_lag_correlation(traj, tau_steps, normalization="biased", detrend=False):
    """Lag correlation sum_{k} (x_{k+tau} - xbar)(x_k - xbar)' / N.

    The full-window mean is removed and the sum over the N - tau available
    products is divided by N (the biased convention); "unbiased" divides by
    N - tau instead.
    """
    x = _centered(traj, detrend)
    n = x.shape[0]
    if n <= tau_steps:
        raise ValueError("need more samples than lag steps")
    denom = n if normalization == "biased" else n - tau_steps
    return x[tau_steps:].T @ x[:-tau_steps] / denom


def compute_stats(traj, cfg=EstimatorConfig()):
    """Sample statistics in the configured coordinates."""
    if cfg.coords == REFERENCE_REDUCED:
        traj = to_relative(traj, ref=cfg.ref_machine)
    elif cfg.coords != FULL:
        raise ValueError(f"unknown coordinate tag {cfg.coords!r}")
    return SampleStats(
        c_hat=sample_covariance(traj, detrend=cfg.detrend),
        r_hat=sample_lag_correlation(traj, cfg.tau_steps, cfg.normalization, cfg.detrend),
        tau_steps=cfg.tau_steps,
        dt=traj.dt,
        n_samples=traj.n_samples,
    )


def estimate_state_matrix(stats, cfg=EstimatorConfig()):
    """Principal-logarithm estimate of the continuous-time state matrix."""
    if cfg.coords == FULL and cfg.ridge == 0.0:
        raise ConditioningError(
            "full-coordinate estimation requires an explicit ridge > 0 "
            "(the angle-shift direction makes the covariance defective)"
        )
    n = stats.c_hat.shape[0]
    c = stats.c_hat + cfg.ridge * np.eye(n)

    cond_c = float(np.linalg.cond(c))
    if not np.isfinite(cond_c) or cond_c > COND_MAX:
        raise ConditioningError(
            f"sample covariance condition number {cond_c:.2e}; "
            "add ridge or estimate in reference-reduced coordinates"
        )

    # m = R_hat C^{-1}; C is symmetric so a single solve suffices
    m = np.linalg.solve(c, stats.r_hat.T).T

    eigs = np.linalg.eigvals(m)
    rho = float(np.abs(eigs).max())
    if rho >= 1.0 + 1e-9:
        warnings.warn(
            f"spectral radius of R C^-1 is {rho:.6f} >= 1; data looks nonstationary",
            NonstationaryWarning,
        )
    scale = max(rho, 1e-300)
    for lam in eigs:
        if abs(lam) < 1e-14 * scale:
            raise BranchCutError("R C^-1 has a zero eigenvalue; logarithm undefined")
        if abs(np.pi - abs(np.angle(lam))) < BRANCH_TOL:
            raise BranchCutError(
                f"eigenvalue {lam:.6e} of R C^-1 lies on the negative real axis "
                "within tolerance; the principal logarithm branch is ambiguous"
            )

    log_m = logm(m)
    norm = np.linalg.norm(log_m)
    imag_residual = 0.0
    if np.iscomplexobj(log_m):
        imag_residual = float(np.linalg.norm(log_m.imag) / max(norm, 1e-300))
        log_m = log_m.real

    a_hat = log_m / (cfg.tau_steps * stats.dt)
    diagnostics = {
        "cond_c": cond_c,
        "spectral_radius": rho,
        "imag_residual": imag_residual,
        "tau_steps": stats.tau_steps,
        "dt": stats.dt,
        "n_samples": stats.n_samples,
    }
    return EstimateResult(a_hat=a_hat, diagnostics=diagnostics)


def estimate_from_trajectory(traj, cfg=EstimatorConfig()):
    """Convenience wrapper: coordinates, sample statistics, then the estimate."""
    stats = compute_stats(traj, cfg)
    result = estimate_state_matrix(stats, cfg)
    if cfg.coords == REFERENCE_REDUCED:
        n_w = traj.omega.shape[1]
        labels = tuple(
            f"delta_{i + 1}-delta_{cfg.ref_machine + 1}"
            for i in range(n_w) if i != cfg.ref_machine
        ) + tuple(f"omega_{i + 1}" for i in range(n_w))
        result = replace(result, state_labels=labels)
    return result
