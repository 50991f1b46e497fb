"""Reduced-network model of a multi-machine AC system with converter stations.

Machines are classical (constant EMF behind transient reactance), loads are
constant impedances folded into the admittance matrix, and every bus other
than the machine internal buses and the converter buses is eliminated by
Kron reduction.  Bus ordering everywhere is: machine internal buses first,
converter buses after.
"""

import warnings
import numpy as np
from dataclasses import dataclass, replace
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .errors import (
    AlgebraicEliminationError,
    EquilibriumError,
    KronReductionError,
    NetworkSolveError,
    SingularNetworkJacobian,
)

NEWTON_TOL = 1e-10
NEWTON_MAXITER = 50


@dataclass(frozen=True)
class MachineSet:
    """Classical generators: inertia/damping/EMF/dispatch/noise intensity."""

    inertia: np.ndarray        # M_i, s*pu
    damping: np.ndarray        # D_i, pu power per pu speed deviation
    emf: np.ndarray            # E_i, pu voltage behind transient reactance
    p_mech: np.ndarray         # mechanical power, pu
    sigma: np.ndarray          # load-fluctuation intensity, dimensionless
    omega0: float = 2.0 * np.pi * 60.0   # base speed, rad/s

    def __post_init__(self):
        for name in ("inertia", "damping", "emf", "p_mech", "sigma"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.inertia.shape[0]
        for name in ("damping", "emf", "p_mech", "sigma"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"machine field {name!r} must have length {n}")
        if np.any(self.inertia <= 0):
            raise ValueError("all inertias must be positive")
        if np.any(self.damping < 0) or np.any(self.sigma < 0):
            raise ValueError("damping and sigma must be nonnegative")
        if np.any(self.emf <= 0):
            raise ValueError("all EMF magnitudes must be positive")

    @property
    def n_gen(self):
        return self.inertia.shape[0]


@dataclass(frozen=True)
class VscSet:
    """Converter stations seen as controllable P/Q injections with speed feedback."""

    p_ref: np.ndarray          # steady-state active power reference, pu
    q_ref: np.ndarray          # steady-state reactive power reference, pu
    k1: np.ndarray             # active-power gains, n_vsc x n_gen
    k2: np.ndarray             # reactive-power gains, n_vsc x n_gen

    def __post_init__(self):
        object.__setattr__(self, "p_ref", np.atleast_1d(np.asarray(self.p_ref, dtype=float)))
        object.__setattr__(self, "q_ref", np.atleast_1d(np.asarray(self.q_ref, dtype=float)))
        object.__setattr__(self, "k1", np.asarray(self.k1, dtype=float))
        object.__setattr__(self, "k2", np.asarray(self.k2, dtype=float))
        n = self.p_ref.shape[0]
        if self.q_ref.shape != (n,):
            raise ValueError("p_ref and q_ref must have the same length")
        if not (np.all(np.isfinite(self.k1)) and np.all(np.isfinite(self.k2))):
            raise ValueError("feedback gains must be finite")

    @property
    def n_vsc(self):
        return self.p_ref.shape[0]

    @classmethod
    def none(cls):
        """Pure AC system: no converter stations."""
        return cls(p_ref=np.zeros(0), q_ref=np.zeros(0),
                   k1=np.zeros((0, 0)), k2=np.zeros((0, 0)))

    @classmethod
    def constant_power(cls, p_ref, q_ref, n_gen):
        """Stations with the given dispatch and zero feedback gains."""
        p_ref = np.atleast_1d(np.asarray(p_ref, dtype=float))
        q_ref = np.atleast_1d(np.asarray(q_ref, dtype=float))
        n = p_ref.shape[0]
        return cls(p_ref=p_ref, q_ref=q_ref,
                   k1=np.zeros((n, n_gen)), k2=np.zeros((n, n_gen)))


@dataclass(frozen=True)
class ReducedAdmittance:
    """Admittance over the retained buses (machines first, converters after)."""

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex)
        if y.ndim != 2 or y.shape[0] != y.shape[1]:
            raise ValueError("reduced admittance must be square")
        object.__setattr__(self, "y", y)

    @property
    def n_bus(self):
        return self.y.shape[0]


@dataclass(frozen=True)
class SystemModel:
    """Everything needed to build the ground-truth state matrices."""

    machines: MachineSet
    vscs: VscSet
    admittance: ReducedAdmittance

    def __post_init__(self):
        expected = self.machines.n_gen + self.vscs.n_vsc
        if self.admittance.n_bus != expected:
            raise ValueError(
                f"admittance covers {self.admittance.n_bus} buses, "
                f"expected {expected} (machines + converters)"
            )
        if self.vscs.n_vsc and self.vscs.k1.shape != (self.vscs.n_vsc, self.machines.n_gen):
            raise ValueError("k1/k2 must be n_vsc x n_gen")

    @property
    def n_gen(self):
        return self.machines.n_gen

    @property
    def n_vsc(self):
        return self.vscs.n_vsc

    def with_gains(self, k1, k2=None):
        """Copy of the model with new feedback gains."""
        k1 = np.asarray(k1, dtype=float)
        k2 = self.vscs.k2 if k2 is None else np.asarray(k2, dtype=float)
        return replace(self, vscs=replace(self.vscs, k1=k1, k2=k2))

    def with_dispatch(self, p_mech):
        """Copy of the model with new mechanical powers."""
        return replace(self, machines=replace(self.machines, p_mech=np.asarray(p_mech, float)))


@dataclass(frozen=True)
class OperatingPoint:
    """Solved steady state: machine angles, converter bus voltages, machine powers."""

    delta0: np.ndarray         # machine internal angles, rad
    theta0: np.ndarray         # converter bus angles, rad
    v0: np.ndarray             # converter bus magnitudes, pu
    p_e0: np.ndarray           # machine electrical powers at the point, pu


@dataclass(frozen=True)
class JacobianBlocks:
    """Partials of (P_E, P_v, Q_v) with respect to (delta, theta, V)."""

    a11: np.ndarray
    a12: np.ndarray
    a13: np.ndarray
    a21: np.ndarray
    a22: np.ndarray
    a23: np.ndarray
    a31: np.ndarray
    a32: np.ndarray
    a33: np.ndarray


def admittance_matrix(n_bus, branches, shunts=()):
    """Assemble a bus admittance matrix.

    branches: iterable of (from_bus, to_bus, y_series) or
              (from_bus, to_bus, y_series, y_shunt_half) with 0-based indices.
    shunts:   iterable of (bus, y_shunt).
    """
    y = np.zeros((n_bus, n_bus), dtype=complex)
    for branch in branches:
        i, j, ys = branch[0], branch[1], complex(branch[2])
        ysh = complex(branch[3]) if len(branch) > 3 else 0.0
        y[i, i] += ys + ysh
        y[j, j] += ys + ysh
        y[i, j] -= ys
        y[j, i] -= ys
    for bus, ysh in shunts:
        y[bus, bus] += complex(ysh)
    return y


def kron_reduce(y_full, retained):
    """Eliminate all buses not in `retained` by the Schur complement.

    Returns the ReducedAdmittance over the retained buses in the order given.
    Raises KronReductionError (naming the offending pivot) when the eliminated
    block is singular.
    """
    y_full = np.asarray(y_full, dtype=complex)
    n = y_full.shape[0]
    retained = list(retained)
    eliminated = [i for i in range(n) if i not in set(retained)]
    if not eliminated:
        return ReducedAdmittance(y=y_full[np.ix_(retained, retained)])

    y_rr = y_full[np.ix_(retained, retained)]
    y_re = y_full[np.ix_(retained, eliminated)]
    y_er = y_full[np.ix_(eliminated, retained)]
    y_ee = y_full[np.ix_(eliminated, eliminated)]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(y_ee)
    diag = np.abs(np.diag(lu))
    scale = max(np.abs(y_ee).max(), 1.0)
    bad = np.where(diag < 1e-12 * scale)[0]
    if bad.size:
        raise KronReductionError(pivot=eliminated[int(bad[0])])

    y_red = y_rr - y_re @ lu_solve((lu, piv), y_er)
    return ReducedAdmittance(y=y_red)


def _bus_voltages(model, delta, theta, v):
    mags = np.concatenate([model.machines.emf, np.asarray(v, dtype=float)])
    angs = np.concatenate([np.asarray(delta, dtype=float), np.asarray(theta, dtype=float)])
    return mags * np.exp(1j * angs), mags


def injections(model, delta, theta, v):
    """Active/reactive power injected into the network at each retained bus.

    Returns (p_e, p_v, q_v): machine electrical powers and converter-bus
    injections, all in pu, positive when power flows into the network.
    """
    u, _ = _bus_voltages(model, delta, theta, v)
    s = u * np.conj(model.admittance.y @ u)
    ng = model.n_gen
    return s.real[:ng], s.real[ng:], s.imag[ng:]


def power_jacobian(model, delta, theta, v):
    """Partials of all bus (P, Q) w.r.t. all bus angles and magnitudes.

    Returns (dp_dang, dp_dmag, dq_dang, dq_dmag), each n_bus x n_bus; the
    magnitude columns for machine buses are partials w.r.t. the (fixed) EMF
    and are simply sliced away by callers.
    """
    u, mags = _bus_voltages(model, delta, theta, v)
    y = model.admittance.y
    # w[i, j] = u_i * conj(y_ij u_j); row sums are the complex injections
    w = u[:, None] * np.conj(y * u[None, :])
    s = w.sum(axis=1)

    ds_dang = -1j * w
    np.fill_diagonal(ds_dang, 1j * (s - np.diag(w)))
    ds_dmag = w / mags[None, :]
    np.fill_diagonal(ds_dmag, (s + np.diag(w)) / mags)

    return ds_dang.real, ds_dmag.real, ds_dang.imag, ds_dmag.imag


def jacobian_blocks(model, point):
    """The nine partial-derivative blocks at a solved operating point."""
    ng = model.n_gen
    dp_dang, dp_dmag, dq_dang, dq_dmag = power_jacobian(
        model, point.delta0, point.theta0, point.v0
    )
    g, c = slice(0, ng), slice(ng, None)
    return JacobianBlocks(
        a11=dp_dang[g, g], a12=dp_dang[g, c], a13=dp_dmag[g, c],
        a21=dp_dang[c, g], a22=dp_dang[c, c], a23=dp_dmag[c, c],
        a31=dq_dang[c, g], a32=dq_dang[c, c], a33=dq_dmag[c, c],
    )


def solve_network(model, delta, p_target=None, q_target=None, guess=None):
    """Newton solve for the converter bus voltages given machine angles.

    Solves P_v(delta, theta, V) = p_target, Q_v(...) = q_target to an
    infinity-norm mismatch below 1e-10.  Flat start unless a (theta, v)
    guess is supplied.
    """
    p_target = model.vscs.p_ref if p_target is None else np.asarray(p_target, dtype=float)
    q_target = model.vscs.q_ref if q_target is None else np.asarray(q_target, dtype=float)
    theta, v, _ = _solve_vsc(model, np.asarray(delta, dtype=float), p_target, q_target, guess)
    return theta, v


def _solve_vsc(model, delta, p_target, q_target, guess=None):
    """Hot-path Newton on the converter buses; also returns machine powers."""
    ng, nv = model.n_gen, model.n_vsc
    y = model.admittance.y
    emf = model.machines.emf
    u_gen = emf * np.exp(1j * delta)
    if nv == 0:
        s = u_gen * np.conj(y @ u_gen)
        return np.zeros(0), np.zeros(0), s.real

    if guess is None:
        theta, v = np.zeros(nv), np.ones(nv)
    else:
        theta, v = np.array(guess[0], dtype=float), np.array(guess[1], dtype=float)

    y_gen, y_vsc = y[:ng], y[ng:]
    y_vv = y[ng:, ng:]
    u = np.empty(ng + nv, dtype=complex)
    u[:ng] = u_gen
    jac = np.empty((2 * nv, 2 * nv))
    resid = np.empty(2 * nv)
    mismatch = np.inf
    for _ in range(NEWTON_MAXITER):
        u_v = v * np.exp(1j * theta)
        u[ng:] = u_v
        s_v = u_v * np.conj(y_vsc @ u)
        resid[:nv] = s_v.real - p_target
        resid[nv:] = s_v.imag - q_target
        mismatch = np.abs(resid).max()
        if mismatch < NEWTON_TOL:
            return theta, v, (u_gen * np.conj(y_gen @ u)).real

        # converter rows of the complex power sensitivities
        w = u_v[:, None] * np.conj(y_vv * u_v[None, :])
        w_diag = np.diagonal(w).copy()
        ds_dang = -1j * w
        np.fill_diagonal(ds_dang, 1j * (s_v - w_diag))
        ds_dmag = w / v[None, :]
        np.fill_diagonal(ds_dmag, (s_v + w_diag) / v)
        jac[:nv, :nv] = ds_dang.real
        jac[:nv, nv:] = ds_dmag.real
        jac[nv:, :nv] = ds_dang.imag
        jac[nv:, nv:] = ds_dmag.imag
        try:
            step = np.linalg.solve(jac, resid)
        except np.linalg.LinAlgError as exc:
            raise SingularNetworkJacobian(str(exc)) from exc
        theta = theta - step[:nv]
        v = v - step[nv:]

    raise NetworkSolveError(mismatch=mismatch, iterations=NEWTON_MAXITER)


def solve_equilibrium(model, ref=0):
    """Steady state with the reference machine angle fixed at zero.

    The free unknowns are the other machine angles and the converter bus
    voltages; the reference machine absorbs the network losses, so its
    electrical power generally differs from its nominal p_mech.  The
    returned OperatingPoint carries the realized machine powers p_e0.
    """
    ng, nv = model.n_gen, model.n_vsc
    free = [i for i in range(ng) if i != ref]

    delta = np.zeros(ng)
    theta, v = np.zeros(nv), np.ones(nv)
    p_m = model.machines.p_mech
    p_t, q_t = model.vscs.p_ref, model.vscs.q_ref

    for _ in range(NEWTON_MAXITER):
        p_e, p_v, q_v = injections(model, delta, theta, v)
        resid = np.concatenate([p_e[free] - p_m[free], p_v - p_t, q_v - q_t])
        if not resid.size or np.abs(resid).max() < NEWTON_TOL:
            return OperatingPoint(delta0=delta, theta0=theta, v0=v, p_e0=p_e)
        dp_dang, dp_dmag, dq_dang, dq_dmag = power_jacobian(model, delta, theta, v)
        c = slice(ng, None)
        jac = np.block([
            [dp_dang[np.ix_(free, free)], dp_dang[np.ix_(free, list(range(ng, ng + nv)))],
             dp_dmag[np.ix_(free, list(range(ng, ng + nv)))]],
            [dp_dang[c, :][:, free], dp_dang[c, c], dp_dmag[c, c]],
            [dq_dang[c, :][:, free], dq_dang[c, c], dq_dmag[c, c]],
        ])
        try:
            step = np.linalg.solve(jac, resid)
        except np.linalg.LinAlgError as exc:
            raise EquilibriumError(f"singular equilibrium Jacobian: {exc}") from exc
        delta[free] -= step[: len(free)]
        theta -= step[len(free): len(free) + nv]
        v -= step[len(free) + nv:]
        if not np.all(np.isfinite(delta)) or np.any(v <= 0):
            raise EquilibriumError("equilibrium iteration left the physical region")

    p_e, p_v, q_v = injections(model, delta, theta, v)
    resid = np.concatenate([p_e[free] - p_m[free], p_v - p_t, q_v - q_t])
    raise EquilibriumError(
        f"no equilibrium after {NEWTON_MAXITER} iterations "
        f"(mismatch {np.abs(resid).max():.3e})"
    )


def reduce_algebraic(blocks):
    """Eliminate the converter bus voltages from the linearized injections.

    Solves the stacked [[A22, A23], [A32, A33]] system by LU (robust even
    when individual sub-blocks are singular) and returns (a1, a2, a3) such
    that dP_E = a1*ddelta + a2*dP_v + a3*dQ_v.
    """
    nv = blocks.a22.shape[0]
    if nv == 0:
        ng = blocks.a11.shape[0]
        return blocks.a11.copy(), np.zeros((ng, 0)), np.zeros((ng, 0))

    stacked = np.block([[blocks.a22, blocks.a23], [blocks.a32, blocks.a33]])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LinAlgWarning)
            lu, piv = lu_factor(stacked)
    except ValueError as exc:
        raise AlgebraicEliminationError(str(exc)) from exc
    diag = np.abs(np.diag(lu))
    if diag.min() < 1e-12 * max(np.abs(stacked).max(), 1.0):
        raise AlgebraicEliminationError(
            "converter-bus block is singular; bus voltage not locally determined"
        )

    rows = np.hstack([blocks.a12, blocks.a13])            # n_g x 2n_v
    cols = np.vstack([blocks.a21, blocks.a31])            # 2n_v x n_g
    w = lu_solve((lu, piv), np.eye(2 * nv))
    sens = rows @ w                                       # d(theta,V) sensitivities
    a1 = blocks.a11 - sens @ cols
    return a1, sens[:, :nv], sens[:, nv:]
