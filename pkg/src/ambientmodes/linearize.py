"""State-space assembly around a solved operating point.

State ordering is [angle deviations; speed deviations].  Full coordinates
keep all machine angles and carry a structural zero eigenvalue (injections
only depend on angle differences); reference-reduced coordinates measure
angles against one machine and are Hurwitz for damped, connected systems.
"""

import numpy as np
from dataclasses import dataclass, replace

from .network import jacobian_blocks, reduce_algebraic, solve_equilibrium

FULL = "full"
REFERENCE_REDUCED = "reference_reduced"


@dataclass(frozen=True)
class StateSpace:
    a: np.ndarray              # open-loop state matrix
    b: np.ndarray              # input matrix for (dP_v, dQ_v)
    s: np.ndarray              # noise input matrix
    a_c: np.ndarray            # closed-loop state matrix
    coords: str = FULL
    ref_machine: int | None = None
    state_labels: tuple = ()

    @property
    def n_states(self):
        return self.a.shape[0]


def state_labels(n_gen, ref=None):
    """Labels for [angles; speeds]; angles relative to `ref` when given."""
    if ref is None:
        angles = [f"delta_{i + 1}" for i in range(n_gen)]
    else:
        angles = [f"delta_{i + 1}-delta_{ref + 1}" for i in range(n_gen) if i != ref]
    return tuple(angles + [f"omega_{i + 1}" for i in range(n_gen)])


def open_loop_matrices(model, a1, a2, a3):
    """Assemble A, B, S from the eliminated injection sensitivities."""
    ng, nv = model.n_gen, model.n_vsc
    m = model.machines
    minv = 1.0 / m.inertia

    a = np.zeros((2 * ng, 2 * ng))
    a[:ng, ng:] = m.omega0 * np.eye(ng)
    a[ng:, :ng] = -minv[:, None] * a1
    a[ng:, ng:] = -np.diag(minv * m.damping)

    b = np.zeros((2 * ng, 2 * nv))
    if nv:
        b[ng:, :nv] = -minv[:, None] * a2
        b[ng:, nv:] = -minv[:, None] * a3

    # diagonal conductance of the reduced network at the machine buses
    g = np.real(np.diag(model.admittance.y))[:ng]
    s = np.zeros((2 * ng, ng))
    s[ng:, :] = np.diag(-minv * m.emf**2 * g * m.sigma)

    return StateSpace(a=a, b=b, s=s, a_c=a.copy(), coords=FULL,
                      state_labels=state_labels(ng))


def closed_loop_matrix(ss, vsc):
    """Fill the closed-loop matrix for speed-feedback converter control.

    The feedback dP_v = K1 dw, dQ_v = K2 dw only alters the speed-speed
    block.  Built as A + B [K1; K2] Pi_w, which is algebraically identical
    to folding the gains into the damping term.
    """
    ng = ss.a.shape[0] // 2
    if vsc.n_vsc == 0:
        return replace(ss, a_c=ss.a.copy())
    pi_w = np.zeros((ng, 2 * ng))
    pi_w[:, ng:] = np.eye(ng)
    a_c = ss.a + ss.b @ np.vstack([vsc.k1, vsc.k2]) @ pi_w
    return replace(ss, a_c=a_c)


def closed_loop_direct(model, a1, a2, a3):
    """Closed-loop matrix with the gains folded into the damping block.

    Independent assembly route used to cross-check closed_loop_matrix.
    """
    ng = model.n_gen
    m = model.machines
    minv = 1.0 / m.inertia
    coupling = a2 @ model.vscs.k1 + a3 @ model.vscs.k2 if model.n_vsc else 0.0
    a_c = np.zeros((2 * ng, 2 * ng))
    a_c[:ng, ng:] = m.omega0 * np.eye(ng)
    a_c[ng:, :ng] = -minv[:, None] * a1
    a_c[ng:, ng:] = -minv[:, None] * (coupling + np.diag(m.damping))
    return a_c


def reduce_reference(ss, ref=0):
    """Project onto (angle differences to the reference machine, all speeds).

    The full closed loop is invariant under a uniform angle shift, so this
    projection preserves every nonzero eigenvalue exactly and removes the
    structural zero mode.
    """
    if ss.coords != FULL:
        raise ValueError("state space is already reference-reduced")
    ng = ss.a.shape[0] // 2
    keep = [i for i in range(ng) if i != ref]

    # t maps full -> reduced; p embeds reduced -> full with delta_ref = 0
    t = np.zeros((2 * ng - 1, 2 * ng))
    for row, i in enumerate(keep):
        t[row, i] = 1.0
        t[row, ref] = -1.0
    t[ng - 1:, ng:] = np.eye(ng)

    p = np.zeros((2 * ng, 2 * ng - 1))
    for row, i in enumerate(keep):
        p[i, row] = 1.0
    p[ng:, ng - 1:] = np.eye(ng)

    return StateSpace(
        a=t @ ss.a @ p,
        b=t @ ss.b,
        s=t @ ss.s,
        a_c=t @ ss.a_c @ p,
        coords=REFERENCE_REDUCED,
        ref_machine=ref,
        state_labels=state_labels(ng, ref=ref),
    )


def linearize(model, ref=0, reduced=False):
    """Full chain: equilibrium, Jacobian blocks, elimination, state space."""
    point = solve_equilibrium(model, ref=ref)
    blocks = jacobian_blocks(model, point)
    a1, a2, a3 = reduce_algebraic(blocks)
    ss = closed_loop_matrix(open_loop_matrices(model, a1, a2, a3), model.vscs)
    return reduce_reference(ss, ref=ref) if reduced else ss


def is_hurwitz(a, tol=0.0):
    return bool(np.all(np.linalg.eigvals(a).real < -tol))
