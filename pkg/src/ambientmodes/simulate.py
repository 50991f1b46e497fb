"""Ambient stochastic simulation and the linear/analytic oracles.

The nonlinear simulator integrates the swing dynamics with the converter
buses held on their (speed-feedback-shifted) power targets at every step,
emulating angle/speed records at the sampling rate.  The linear simulator
integrates dx = A x dt + S dW for any assembled state space.  Both default
to a stochastic Heun scheme (weak second-order drift): plain Euler-Maruyama
at the 20 ms sampling step biases the recovered damping by ~h*w^2/2, which
is far above the accuracy this toolkit is meant to demonstrate.
"""

import warnings
import numpy as np
from dataclasses import dataclass, replace
from scipy.linalg import expm, solve_continuous_lyapunov

from . import _kernels
from .errors import SimulationError, SingularNetworkJacobian, StabilityError
from .linearize import REFERENCE_REDUCED, is_hurwitz, linearize
from .network import NEWTON_MAXITER, NEWTON_TOL, solve_equilibrium


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.02           # sampling period, s (50 Hz)
    duration: float = 300.0    # recorded window length, s
    seed: int = 0
    burn_in: float = 20.0      # discarded initial span, s
    sub_steps: int = 5         # integrator sub-steps per sample
    method: str = "heun"       # "heun" | "euler" | "exact" (linear only)

    def __post_init__(self):
        if self.dt <= 0 or self.duration <= 0 or self.burn_in < 0:
            raise ValueError("dt and duration must be positive, burn_in nonnegative")
        if self.sub_steps < 1:
            raise ValueError("sub_steps must be >= 1")


@dataclass(frozen=True)
class NoiseSpec:
    std_delta: float = 1e-3    # measurement noise on angles, rad
    std_omega: float = 1e-6    # measurement noise on speeds, pu
    seed: int = 0

    def __post_init__(self):
        if self.std_delta < 0 or self.std_omega < 0:
            raise ValueError("noise standard deviations must be nonnegative")


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled angle/speed record (the emulated measurement set)."""

    t0: float
    dt: float
    delta: np.ndarray          # samples x n_angle, rad
    omega: np.ndarray          # samples x n_gen, pu
    labels: tuple = ()

    def __post_init__(self):
        if self.delta.shape[0] != self.omega.shape[0]:
            raise ValueError("delta and omega must have the same sample count")

    @property
    def n_samples(self):
        return self.delta.shape[0]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_samples)

    def state_array(self):
        """Samples x (angles + speeds), angle channels first."""
        return np.hstack([self.delta, self.omega])


def _sample_counts(cfg):
    n_rec = int(round(cfg.duration / cfg.dt))
    n_burn = int(round(cfg.burn_in / cfg.dt))
    return n_burn, n_rec


def simulate_nonlinear(model, cfg, load_noise="additive", ref=0):
    """Integrate the stochastic swing dynamics with converter feedback.

    Converter targets each step are p_ref + K1 (w - 1), q_ref + K2 (w - 1);
    the bus voltages are re-solved from the algebraic equations.  Noise can
    enter additively through the noise-input matrix (default) or by
    re-randomizing the machine-bus diagonal of the reduced admittance
    (load_noise="multiplicative"); for fixed-EMF machines the two channels
    produce the same accelerating-power fluctuation.
    """
    if load_noise not in ("additive", "multiplicative"):
        raise ValueError("load_noise must be 'additive' or 'multiplicative'")
    if cfg.method not in ("heun", "euler"):
        raise ValueError("nonlinear simulation supports method 'heun' or 'euler'")
    point = solve_equilibrium(model, ref=ref)
    reduced = linearize(model, ref=ref, reduced=True)
    if not is_hurwitz(reduced.a_c):
        warnings.warn("reference-reduced closed loop is not Hurwitz; "
                      "the ambient process has no stationary distribution")

    m = model.machines
    ng = model.n_gen
    g_diag = np.real(np.diag(model.admittance.y))[:ng]
    noise_gain = -(m.emf**2) * g_diag * m.sigma / m.inertia

    n_burn, n_rec = _sample_counts(cfg)
    total_sub = (n_burn + n_rec) * cfg.sub_steps
    noise = np.random.default_rng(cfg.seed).standard_normal((total_sub, ng))

    try:
        deltas, omegas, status, step = _kernels.integrate_swing(
            np.ascontiguousarray(model.admittance.y),
            m.emf, m.inertia, m.damping, point.p_e0, noise_gain, m.sigma,
            np.ascontiguousarray(model.vscs.k1), np.ascontiguousarray(model.vscs.k2),
            model.vscs.p_ref, model.vscs.q_ref, m.omega0,
            cfg.dt / cfg.sub_steps, cfg.sub_steps, n_burn, n_rec, noise,
            point.delta0, point.theta0, point.v0,
            cfg.method == "heun", load_noise == "multiplicative",
            NEWTON_TOL, NEWTON_MAXITER,
        )
    except np.linalg.LinAlgError as exc:
        raise SingularNetworkJacobian(str(exc)) from exc
    if status == _kernels.STATUS_DIVERGED:
        raise SimulationError(step, f"state diverged at step {step}")
    if status != _kernels.STATUS_OK:
        raise SimulationError(step, f"algebraic solve failed at step {step}")

    labels = tuple(f"G{i + 1}" for i in range(ng))
    return Trajectory(t0=cfg.burn_in, dt=cfg.dt, delta=deltas, omega=omegas, labels=labels)


def _speed_count(ss):
    if ss.state_labels:
        return sum(1 for lbl in ss.state_labels if lbl.startswith("omega"))
    n = ss.n_states
    return n // 2 if n % 2 == 0 else (n + 1) // 2


def simulate_linear_ou(ss, cfg, allow_unstable=False):
    """Integrate dx = A_c x dt + S dW from rest; output labeled channels.

    Angle channels are deviations (relative angles in reduced coordinates);
    speed channels are 1 + deviation so the record looks like measured data.
    method="exact" uses the exact discrete transition and noise covariance.
    """
    a, s = ss.a_c, ss.s
    if ss.coords != REFERENCE_REDUCED and not allow_unstable:
        raise StabilityError(
            "full-coordinate state space carries a structural zero mode; "
            "pass a reference-reduced system or allow_unstable=True"
        )
    if not is_hurwitz(a) and not allow_unstable:
        raise StabilityError("state matrix is not Hurwitz")

    n = ss.n_states
    n_w = _speed_count(ss)
    n_burn, n_rec = _sample_counts(cfg)
    rng = np.random.default_rng(cfg.seed)
    x = np.zeros(n)
    states = np.empty((n_rec, n))
    out = 0

    if cfg.method == "exact":
        f, chol = _exact_discretization(a, s, cfg.dt)
        for sample in range(1, n_burn + n_rec + 1):
            x = f @ x + chol @ rng.standard_normal(n)
            if sample > n_burn:
                states[out] = x
                out += 1
    else:
        h = cfg.dt / cfg.sub_steps
        sqrt_h = np.sqrt(h)
        for step in range((n_burn + n_rec) * cfg.sub_steps):
            w = s @ rng.standard_normal(s.shape[1]) * sqrt_h
            if cfg.method == "euler":
                x = x + h * (a @ x) + w
            else:
                x_pred = x + h * (a @ x) + w
                x = x + 0.5 * h * (a @ (x + x_pred)) + w
            if (step + 1) % cfg.sub_steps == 0:
                sample = (step + 1) // cfg.sub_steps
                if sample > n_burn:
                    states[out] = x
                    out += 1

    delta = states[:, : n - n_w]
    omega = 1.0 + states[:, n - n_w:]
    labels = tuple(f"G{i + 1}" for i in range(n_w))
    return Trajectory(t0=cfg.burn_in, dt=cfg.dt, delta=delta, omega=omega, labels=labels)


def _exact_discretization(a, s, dt):
    """Exact OU transition matrix and noise Cholesky-like factor over dt."""
    n = a.shape[0]
    q = s @ s.T
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = a
    block[:n, n:] = q
    block[n:, n:] = -a.T
    eb = expm(block * dt)
    f = eb[:n, :n]
    qd = eb[:n, n:] @ f.T
    qd = 0.5 * (qd + qd.T)
    vals, vecs = np.linalg.eigh(qd)
    vals = np.clip(vals, 0.0, None)
    return f, vecs * np.sqrt(vals)


def add_measurement_noise(traj, spec):
    """Additive i.i.d. Gaussian noise per channel class; input unmodified."""
    rng = np.random.default_rng(spec.seed)
    delta = traj.delta + spec.std_delta * rng.standard_normal(traj.delta.shape)
    omega = traj.omega + spec.std_omega * rng.standard_normal(traj.omega.shape)
    return replace(traj, delta=delta, omega=omega)


def lyapunov_covariance(a, s):
    """Stationary covariance of dx = A x dt + S dW: solves A C + C A' + S S' = 0."""
    a = np.asarray(a, dtype=float)
    s = np.asarray(s, dtype=float)
    if not is_hurwitz(a):
        raise StabilityError("stationary covariance requires a Hurwitz matrix")
    c = solve_continuous_lyapunov(a, -s @ s.T)
    return 0.5 * (c + c.T)


def analytic_lag_correlation(a, c, tau):
    """Stationary lag correlation R(tau) = exp(A tau) C of the linear process."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return expm(np.asarray(a, dtype=float) * tau) @ c
