"""Electromechanical modes, shapes and participation factors of a state matrix."""

import warnings
import numpy as np
from dataclasses import dataclass

from .errors import DegenerateModesError, NearDegenerateWarning

OSCILLATORY_TOL = 1e-6     # rad/s on |Im lambda|
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Mode:
    """One oscillatory eigen-pair (the Im > 0 representative)."""

    lam: complex
    freq: float                # damped frequency, Hz
    damping: float             # ratio, dimensionless
    shape: np.ndarray          # right-eigenvector slice over speed states
    participation: np.ndarray  # over all states, column sums to 1


@dataclass(frozen=True)
class ModeSet:
    modes: tuple
    source: str = "truth"      # "truth" | "estimated"
    state_labels: tuple = ()
    real_eigenvalues: np.ndarray = None

    def __post_init__(self):
        freqs = [m.freq for m in self.modes]
        if freqs != sorted(freqs):
            raise ValueError("modes must be sorted by frequency")

    @property
    def frequencies(self):
        return np.array([m.freq for m in self.modes])

    @property
    def dampings(self):
        return np.array([m.damping for m in self.modes])


@dataclass(frozen=True)
class MatchedPair:
    truth: Mode
    est: Mode
    freq_error_pct: float      # signed, (estimated - actual) / actual * 100
    damping_error_pct: float
    distance: float            # |lam_truth - lam_est|


@dataclass(frozen=True)
class ModeMatch:
    pairs: tuple
    unmatched_truth: tuple
    unmatched_est: tuple


def _eig_with_left(a):
    """Eigen-decomposition with left vectors normalized to psi_i . phi_i = 1."""
    a = np.asarray(a, dtype=float)
    vals, phi = np.linalg.eig(a)
    scale = max(np.abs(vals).max(), 1.0)
    n = vals.size
    if n > 1:
        gaps = np.abs(vals[:, None] - vals[None, :])
        np.fill_diagonal(gaps, np.inf)
        min_gap = gaps.min()
        if min_gap < 1e-12 * scale:
            raise DegenerateModesError(
                f"repeated eigenvalues (gap {min_gap:.2e}); participation undefined"
            )
        if min_gap < 1e-6 * scale:
            warnings.warn(
                f"nearly repeated eigenvalues (gap {min_gap:.2e})",
                NearDegenerateWarning,
            )
    cond_phi = np.linalg.cond(phi)
    if cond_phi > 1e12:
        raise DegenerateModesError(
            f"eigenvector matrix condition {cond_phi:.2e}; matrix is near defective"
        )
    psi = np.linalg.inv(phi)     # rows, already psi_i . phi_i = 1
    return vals, phi, psi


def participation_factors(a, normalization="sum"):
    """Participation matrix p[k, i] = |phi_ki psi_ik|, columns over eigenvalues.

    Columns follow numpy.linalg.eig order.  normalization: "sum" scales each
    column to unit sum, "max" to unit maximum, "none" leaves the raw
    |right*left| products (whose complex sum per column is 1).
    """
    vals, phi, psi = _eig_with_left(a)
    raw = np.abs(phi * psi.T)
    if normalization == "none":
        return raw
    if normalization == "max":
        return raw / raw.max(axis=0, keepdims=True)
    if normalization == "sum":
        return raw / raw.sum(axis=0, keepdims=True)
    raise ValueError(f"unknown normalization {normalization!r}")


def _speed_indices(n_states, labels):
    if labels:
        idx = [i for i, lbl in enumerate(labels) if lbl.startswith("omega")]
        if idx:
            return idx
    # [angles; speeds] convention: speeds are the trailing half (rounded up
    # for reference-reduced systems with one angle fewer)
    n_w = n_states // 2 if n_states % 2 == 0 else (n_states + 1) // 2
    return list(range(n_states - n_w, n_states))


def eigen_modes(a, labels=(), source="truth"):
    """Oscillatory modes of a state matrix, sorted by frequency.

    Conjugate pairs are reported once (Im > 0 representative); real
    eigenvalues are excluded from the mode list but kept on the ModeSet.
    Shapes are the speed-state components of the right eigenvectors,
    normalized to unit magnitude and zero phase at the largest entry.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("state matrix must be finite")
    vals, phi, psi = _eig_with_left(a)
    part = np.abs(phi * psi.T)
    part = part / part.sum(axis=0, keepdims=True)
    speed_idx = _speed_indices(a.shape[0], labels)

    modes = []
    real_eigs = []
    for i, lam in enumerate(vals):
        if abs(lam.imag) <= OSCILLATORY_TOL:
            real_eigs.append(lam.real)
            continue
        if lam.imag < 0:
            continue
        shape = phi[speed_idx, i]
        pivot = shape[np.argmax(np.abs(shape))]
        shape = shape / pivot if pivot != 0 else shape
        modes.append(Mode(
            lam=complex(lam),
            freq=float(lam.imag / TWO_PI),
            damping=float(-lam.real / abs(lam)),
            shape=shape,
            participation=part[:, i].real,
        ))

    modes.sort(key=lambda m: m.freq)
    return ModeSet(
        modes=tuple(modes),
        source=source,
        state_labels=tuple(labels),
        real_eigenvalues=np.sort(np.array(real_eigs)),
    )


def match_modes(truth, est):
    """Greedy nearest-neighbor pairing in the complex plane.

    Candidate pairs are ranked by |lam_t - lam_e| with frequency distance as
    the tie-breaker; leftover modes on either side are flagged unmatched.
    Errors are signed percentages relative to the actual (truth) values.
    """
    t_modes, e_modes = list(truth.modes), list(est.modes)
    candidates = sorted(
        ((abs(tm.lam - em.lam), abs(tm.freq - em.freq), ti, ei)
         for ti, tm in enumerate(t_modes) for ei, em in enumerate(e_modes)),
        key=lambda c: (c[0], c[1]),
    )
    used_t, used_e, pairs = set(), set(), []
    for dist, _, ti, ei in candidates:
        if ti in used_t or ei in used_e:
            continue
        used_t.add(ti)
        used_e.add(ei)
        tm, em = t_modes[ti], e_modes[ei]
        pairs.append(MatchedPair(
            truth=tm,
            est=em,
            freq_error_pct=100.0 * (em.freq - tm.freq) / tm.freq,
            damping_error_pct=100.0 * (em.damping - tm.damping) / tm.damping,
            distance=dist,
        ))
    pairs.sort(key=lambda p: p.truth.freq)
    return ModeMatch(
        pairs=tuple(pairs),
        unmatched_truth=tuple(m for i, m in enumerate(t_modes) if i not in used_t),
        unmatched_est=tuple(m for i, m in enumerate(e_modes) if i not in used_e),
    )


def shape_compare(truth, est):
    """Alignment of two mode shapes in [0, 1], invariant to a global phase."""
    s1 = np.asarray(truth.shape if isinstance(truth, Mode) else truth, dtype=complex)
    s2 = np.asarray(est.shape if isinstance(est, Mode) else est, dtype=complex)
    if s1.shape != s2.shape:
        raise ValueError("shapes must have equal length")
    denom = np.linalg.norm(s1) * np.linalg.norm(s2)
    if denom == 0:
        return 0.0
    return float(np.abs(np.vdot(s1, s2)) / denom)
