"""Bundled desk-scale test systems and the scripted experiment cases.

Fixture parameters are standard classical-model data, chosen so that the
build-time invariants hold: solvable equilibrium, Hurwitz reference-reduced
closed loop, all damping ratios inside (0, 20%), and ambient signal levels
well above the measurement-noise floors used in the noise study.
"""

import numpy as np
from dataclasses import dataclass

from .estimate import EstimatorConfig, estimate_from_trajectory
from .linearize import is_hurwitz, linearize
from .modal import eigen_modes, match_modes, shape_compare
from .network import (
    MachineSet,
    SystemModel,
    VscSet,
    admittance_matrix,
    jacobian_blocks,
    kron_reduce,
    reduce_algebraic,
    solve_equilibrium,
)
from .simulate import NoiseSpec, SimConfig, add_measurement_noise, simulate_nonlinear

FIXTURE_NAMES = ("twomachine_1vsc", "ninebus_1vsc", "tenmachine_3vsc")
CASE_NAMES = ("I", "II", "noise")
DEFAULT_SEEDS = tuple(range(1, 11))


@dataclass(frozen=True)
class FixtureSystem:
    name: str
    model: SystemModel
    notes: str = ""


@dataclass(frozen=True)
class ExperimentReport:
    case_id: str
    fixture: str
    seeds: tuple
    mode_table: tuple          # one row per true mode (dicts)
    per_seed: tuple            # per-seed signed errors and diagnostics
    shape_scores: tuple        # target-mode shape alignment per seed
    participation_error: float  # median over seeds, max-abs entry, target mode
    target_mode: dict
    checks: tuple              # (name, value, threshold, passed) dicts
    diagnostics: dict

    def to_dict(self):
        return {
            "case_id": self.case_id,
            "fixture": self.fixture,
            "seeds": list(self.seeds),
            "mode_table": [dict(r) for r in self.mode_table],
            "per_seed": [dict(r) for r in self.per_seed],
            "shape_scores": list(self.shape_scores),
            "participation_error": self.participation_error,
            "target_mode": dict(self.target_mode),
            "checks": [dict(c) for c in self.checks],
            "diagnostics": dict(self.diagnostics),
        }


def _bake_dispatch(model, ref=0):
    """Fix the slack imbalance into the model's mechanical powers."""
    point = solve_equilibrium(model, ref=ref)
    return model.with_dispatch(point.p_e0)


def _build_twomachine():
    # terminals 0-1, load/converter bus 2, machine internal buses 3-4
    branches = [
        (0, 2, 1 / (0.020 + 0.20j), 0.030j),
        (1, 2, 1 / (0.018 + 0.16j), 0.025j),
        (3, 0, 1 / 0.12j),
        (4, 1, 1 / 0.15j),
    ]
    shunts = [(2, 1.1 - 0.35j)]
    red = kron_reduce(admittance_matrix(5, branches, shunts), [3, 4, 2])
    machines = MachineSet(
        inertia=[13.0, 10.0], damping=[10.0, 8.0], emf=[1.05, 1.04],
        p_mech=[0.55, 0.35], sigma=[0.05, 0.05],
    )
    vscs = VscSet.constant_power([0.3], [0.0], 2)
    return SystemModel(machines=machines, vscs=vscs, admittance=red)


def _build_ninebus():
    # three-machine nine-bus grid, converter station at the bus 8 load center;
    # machine internal buses are 9-11, everything but those and bus 7 is folded
    # away; terminal-bus loads keep every machine directly exposed to load
    # fluctuations so the ambient speed signals stay well above the PMU noise
    branches = [
        (3, 4, 1 / (0.010 + 0.085j), 0.088j),
        (3, 5, 1 / (0.017 + 0.092j), 0.079j),
        (4, 6, 1 / (0.032 + 0.161j), 0.153j),
        (5, 8, 1 / (0.039 + 0.170j), 0.179j),
        (6, 7, 1 / (0.0085 + 0.072j), 0.0745j),
        (7, 8, 1 / (0.0119 + 0.1008j), 0.1045j),
        (0, 3, 1 / 0.0576j),
        (1, 6, 1 / 0.0625j),
        (2, 8, 1 / 0.0586j),
        (9, 0, 1 / 0.0608j),
        (10, 1, 1 / 0.1198j),
        (11, 2, 1 / 0.1813j),
    ]
    shunts = [(4, 1.25 - 0.5j), (5, 0.9 - 0.3j), (7, 1.0 - 0.35j),
              (0, 1.3 - 0.33j), (1, 1.3 - 0.33j), (2, 1.3 - 0.33j)]
    red = kron_reduce(admittance_matrix(12, branches, shunts), [9, 10, 11, 7])
    machines = MachineSet(
        inertia=[47.28, 12.8, 6.02], damping=[20.0, 12.0, 7.0],
        emf=[1.04, 1.025, 1.025], p_mech=[2.7, 2.4, 1.4], sigma=[0.05] * 3,
    )
    vscs = VscSet.constant_power([0.5], [0.0], 3)
    return SystemModel(machines=machines, vscs=vscs, admittance=red)


def _build_tenmachine():
    # two five-machine clusters on hubs 10/11 with a weak tie; machines 7 and 8
    # share a direct line and low damping, forming the poorly damped target
    # pair; converter stations at both hubs and at machine 8's terminal bus 7;
    # every terminal carries local load so all machines see the fluctuations
    x_tot = [0.275, 0.224, 0.175, 0.149, 0.136, 0.26, 0.194, 0.165, 0.151, 0.178]
    branches = []
    for i in range(10):
        hub = 10 if i < 5 else 11
        xl = 0.6 * x_tot[i]
        branches.append((i, hub, 1 / (0.08 * xl + 1j * xl), 0.02j))
    branches.append((6, 7, 1 / (0.012 + 0.22j), 0.02j))
    branches.append((10, 11, 1 / (0.03 + 0.65j), 0.05j))
    for i in range(10):
        branches.append((12 + i, i, 1 / (1j * 0.4 * x_tot[i])))
    shunts = [(10, 2.1 - 0.6j), (11, 1.6 - 0.5j)]
    shunts += [(i, 2.2 - 0.55j if i in (6, 7) else 1.2 - 0.3j) for i in range(10)]
    red = kron_reduce(admittance_matrix(22, branches, shunts),
                      list(range(12, 22)) + [10, 11, 7])

    inertia = 0.7 * np.array([52, 38, 30, 24, 18, 44, 34, 26, 20, 12], float)
    w_loc = 2 * np.pi * np.array([0.85, 1.10, 1.40, 1.70, 2.05,
                                  0.95, 1.25, 1.55, 1.85, 2.2])
    damping = 0.085 * inertia * w_loc
    damping[6] *= 0.35
    damping[7] *= 0.35
    machines = MachineSet(
        inertia=inertia, damping=damping,
        emf=[1.05, 1.04, 1.03, 1.05, 1.04, 1.03, 1.05, 1.04, 1.03, 1.05],
        p_mech=[1.65] * 10, sigma=[0.05] * 10,
    )
    vscs = VscSet.constant_power([0.5, 0.5, 0.4], [0.0, 0.0, 0.0], 10)
    return SystemModel(machines=machines, vscs=vscs, admittance=red)


_BUILDERS = {
    "twomachine_1vsc": (_build_twomachine,
                        "two machines over a common load bus, one converter"),
    "ninebus_1vsc": (_build_ninebus,
                     "three-machine nine-bus grid, converter at the bus-8 load center"),
    "tenmachine_3vsc": (_build_tenmachine,
                        "two five-machine clusters with a weak tie and a poorly "
                        "damped machine pair; three converters"),
}


def build_fixture(name):
    """Deterministically build and validate one of the bundled systems."""
    if name not in _BUILDERS:
        raise ValueError(f"unknown fixture {name!r}; choose from {FIXTURE_NAMES}")
    builder, notes = _BUILDERS[name]
    model = _bake_dispatch(builder())
    fixture = FixtureSystem(name=name, model=model, notes=notes)
    _validate(fixture)
    return fixture


def _validate(fixture):
    ss = linearize(fixture.model, reduced=True)
    if not is_hurwitz(ss.a_c):
        raise ValueError(f"{fixture.name}: reference-reduced closed loop not Hurwitz")
    modes = eigen_modes(ss.a_c, ss.state_labels)
    zetas = modes.dampings
    if not np.all((zetas > 0) & (zetas < 0.20)):
        raise ValueError(f"{fixture.name}: damping ratios outside (0, 20%): {zetas}")
    if fixture.name == "ninebus_1vsc":
        freqs = modes.frequencies
        if len(freqs) != 2 or not np.all((freqs > 0.5) & (freqs < 3.0)):
            raise ValueError(f"{fixture.name}: expected 2 modes in (0.5, 3) Hz, got {freqs}")
    if fixture.name == "tenmachine_3vsc" and not np.any(zetas < 0.05):
        raise ValueError(f"{fixture.name}: no mode with damping below 5%")


def injection_sensitivities(model, ref=0):
    """(a1, a2, a3) of the eliminated linearized injections at equilibrium."""
    point = solve_equilibrium(model, ref=ref)
    return reduce_algebraic(jacobian_blocks(model, point))


def select_damping_feedback(model, target_shape, zeta_cap=0.25, boost_cap=2.5):
    """Antisymmetric active-power feedback pair for one oscillatory mode.

    From the (estimated) speed mode shape: the two dominant machines in
    phase opposition get opposite gains, placed on the converter with the
    strongest power coupling to them; the electrically closer machine gets
    the negative sign (injection backs off when it accelerates).  The gain
    magnitude is the largest scan value that keeps the closed loop Hurwitz
    with every damping ratio under zeta_cap and the target ratio improved
    but not beyond boost_cap times its open-loop value.

    Returns (k1, info_dict).
    """
    shape = np.asarray(target_shape, dtype=complex)
    mach_a = int(np.argmax(np.abs(shape)))
    opposed = np.real(shape * np.conj(shape[mach_a])) < 0
    if not np.any(opposed):
        raise ValueError("target mode has no machine in phase opposition")
    weight = np.where(opposed, np.abs(shape), -np.inf)
    mach_b = int(np.argmax(weight))

    _, a2, _ = injection_sensitivities(model)
    coupling = np.abs(a2[mach_a]) + np.abs(a2[mach_b])
    vsc = int(np.argmax(coupling))
    near, far = ((mach_a, mach_b) if np.abs(a2[mach_a, vsc]) >= np.abs(a2[mach_b, vsc])
                 else (mach_b, mach_a))

    base_truth = linearize(model, reduced=True)
    base_modes = eigen_modes(base_truth.a_c, base_truth.state_labels)
    target_lam = _nearest_mode(base_modes, shape).lam
    zeta0 = -target_lam.real / abs(target_lam)

    base_gain = float(np.sqrt(model.machines.inertia[near] * model.machines.inertia[far]))
    f0 = abs(target_lam.imag) / (2.0 * np.pi)
    best = None
    for mult in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0):
        k1 = np.zeros_like(model.vscs.k1)
        gain = base_gain * mult
        k1[vsc, near] = -gain
        k1[vsc, far] = +gain
        closed = linearize(model.with_gains(k1), reduced=True)
        if not is_hurwitz(closed.a_c):
            continue
        modes = eigen_modes(closed.a_c, closed.state_labels)
        if np.any(modes.dampings >= zeta_cap):
            continue
        new = min(modes.modes, key=lambda md: abs(md.lam - target_lam))
        if new.damping <= zeta0 or new.damping > boost_cap * zeta0:
            continue
        # damping support must not turn into a retune of the mode itself
        if abs(new.freq - f0) > 0.10 * f0:
            continue
        if best is None or new.damping > best[1]:
            best = (gain, new.damping, k1)
    if best is None:
        raise ValueError("no scanned gain improves the target mode within the caps")

    gain, zeta_new, k1 = best
    info = {
        "vsc": vsc, "machine_negative": near, "machine_positive": far,
        "gain": gain, "zeta_open": float(zeta0), "zeta_closed": float(zeta_new),
    }
    return k1, info


def _nearest_mode(modeset, shape=None, lam=None):
    if lam is not None:
        return min(modeset.modes, key=lambda md: abs(md.lam - lam))
    shape = np.asarray(shape, dtype=complex)
    return max(modeset.modes, key=lambda md: shape_compare(md.shape, shape))


def _least_damped(modeset):
    return min(modeset.modes, key=lambda md: md.damping)


def _estimate_modes(traj, est_cfg, labels):
    result = estimate_from_trajectory(traj, est_cfg)
    return result, eigen_modes(result.a_hat, labels, source="estimated")


def _seed_rows(truth_modes, matches):
    """One row per truth mode; NaNs when the estimate found no counterpart."""
    by_truth = {id(p.truth): p for p in matches.pairs}
    rows = []
    for mode in truth_modes.modes:
        pair = by_truth.get(id(mode))
        if pair is None:
            rows.append({"f_a": mode.freq, "f_e": np.nan, "freq_error_pct": np.nan,
                         "zeta_a": mode.damping, "zeta_e": np.nan,
                         "zeta_error_pct": np.nan})
        else:
            rows.append({"f_a": mode.freq, "f_e": pair.est.freq,
                         "freq_error_pct": pair.freq_error_pct,
                         "zeta_a": mode.damping, "zeta_e": pair.est.damping,
                         "zeta_error_pct": pair.damping_error_pct})
    return rows


def _aggregate_mode_table(truth_modes, per_seed_rows):
    table = []
    for i, mode in enumerate(truth_modes.modes):
        f_errs = [abs(rows[i]["freq_error_pct"]) for rows in per_seed_rows]
        z_errs = [abs(rows[i]["zeta_error_pct"]) for rows in per_seed_rows]
        table.append({
            "mode": i + 1,
            "f_a": mode.freq,
            "f_e_median": float(np.median([rows[i]["f_e"] for rows in per_seed_rows])),
            "freq_error_median_pct": float(np.median(f_errs)),
            "zeta_a": mode.damping,
            "zeta_e_median": float(np.median([rows[i]["zeta_e"] for rows in per_seed_rows])),
            "zeta_error_median_pct": float(np.median(z_errs)),
        })
    return table


def _check(name, value, threshold, op="<"):
    passed = value < threshold if op == "<" else value > threshold
    return {"name": name, "value": float(value), "threshold": float(threshold),
            "op": op, "passed": bool(passed)}


def _run_case_one(fixture, seeds, sim_cfg, est_cfg, noise_spec=None):
    """Case I machinery: simulate/estimate per seed against the fixed truth."""
    model = fixture.model
    truth_ss = linearize(model, reduced=True)
    truth_modes = eigen_modes(truth_ss.a_c, truth_ss.state_labels)
    target = _least_damped(truth_modes)
    target_idx = truth_modes.modes.index(target)

    per_seed_rows, per_seed, shape_scores, part_errors = [], [], [], []
    estimates = []
    for seed in seeds:
        cfg = SimConfig(dt=sim_cfg.dt, duration=sim_cfg.duration, seed=seed,
                        burn_in=sim_cfg.burn_in, sub_steps=sim_cfg.sub_steps,
                        method=sim_cfg.method)
        traj = simulate_nonlinear(model, cfg)
        if noise_spec is not None:
            traj = add_measurement_noise(
                traj, NoiseSpec(noise_spec.std_delta, noise_spec.std_omega, seed=seed))
        result, est_modes = _estimate_modes(traj, est_cfg, truth_ss.state_labels)
        matches = match_modes(truth_modes, est_modes)
        rows = _seed_rows(truth_modes, matches)
        per_seed_rows.append(rows)
        estimates.append(result)

        pair = next((p for p in matches.pairs if p.truth is target), None)
        if pair is None:
            shape_scores.append(np.nan)
            part_errors.append(np.nan)
        else:
            shape_scores.append(shape_compare(target, pair.est))
            part_errors.append(
                float(np.abs(pair.est.participation - target.participation).max()))
        per_seed.append({
            "seed": seed,
            "rows": rows,
            "a_error_fro": float(np.linalg.norm(result.a_hat - truth_ss.a_c)
                                 / np.linalg.norm(truth_ss.a_c)),
            "diagnostics": result.diagnostics,
        })

    table = _aggregate_mode_table(truth_modes, per_seed_rows)
    return {
        "truth_ss": truth_ss, "truth_modes": truth_modes,
        "target": target, "target_idx": target_idx,
        "table": table, "per_seed": per_seed,
        "shape_scores": shape_scores, "part_errors": part_errors,
        "estimates": estimates,
    }


def run_case(fixture, case, seeds=DEFAULT_SEEDS, sim_cfg=SimConfig(),
             est_cfg=EstimatorConfig(), noise_spec=NoiseSpec()):
    """Run one scripted experiment and assemble its report.

    Case I: converters on constant power, ambient run, estimate, compare.
    Case II: pick the least-damped mode from the Case-I estimate, place an
    antisymmetric speed-feedback pair on its two dominant opposed machines,
    re-run, and check that the damping increase is captured.
    Case noise: the Case II arrangement with measurement noise added.
    """
    case = str(case).strip()
    if case.lower() == "noise":
        case = "noise"
    elif case.upper() in ("I", "II"):
        case = case.upper()
    else:
        raise ValueError(f"unknown case {case!r}; choose from {CASE_NAMES}")
    seeds = tuple(int(s) for s in seeds)

    if case == "I":
        base = _run_case_one(fixture, seeds, sim_cfg, est_cfg)
        freq_meds = [r["freq_error_median_pct"] for r in base["table"]]
        zeta_meds = [r["zeta_error_median_pct"] for r in base["table"]]
        checks = (
            _check("max_mode_median_freq_error_pct", max(freq_meds), 3.0),
            _check("median_mode_median_zeta_error_pct", float(np.median(zeta_meds)), 10.0),
            _check("max_mode_median_zeta_error_pct", max(zeta_meds), 20.0),
            _check("median_target_participation_error", float(np.median(base["part_errors"])), 0.1),
        )
        target = base["target"]
        return ExperimentReport(
            case_id="I", fixture=fixture.name, seeds=seeds,
            mode_table=tuple(base["table"]),
            per_seed=tuple(base["per_seed"]),
            shape_scores=tuple(base["shape_scores"]),
            participation_error=float(np.median(base["part_errors"])),
            target_mode={"f_a": target.freq, "zeta_a": target.damping},
            checks=checks,
            diagnostics=_median_diagnostics(base["per_seed"]),
        )

    # Cases II and noise build on the Case-I runs with the same seeds.
    # The least-damped true mode is the target; machine selection reads the
    # ESTIMATED shape of its counterpart in the first seed's estimate.
    base = _run_case_one(fixture, seeds, sim_cfg, est_cfg)
    open_target = base["target"]
    first_estimate_modes = eigen_modes(
        base["estimates"][0].a_hat, base["truth_ss"].state_labels, source="estimated")
    est_target = _nearest_mode(first_estimate_modes, lam=open_target.lam)
    k1, gain_info = select_damping_feedback(fixture.model, est_target.shape)

    closed_model = fixture.model.with_gains(k1)
    closed_fixture = FixtureSystem(name=fixture.name, model=closed_model,
                                   notes=fixture.notes)
    spec = noise_spec if case == "noise" else None
    closed = _run_case_one(closed_fixture, seeds, sim_cfg, est_cfg, noise_spec=spec)

    closed_target = _nearest_mode(closed["truth_modes"], lam=open_target.lam)
    t_open = base["truth_modes"].modes.index(open_target)
    t_closed = closed["truth_modes"].modes.index(closed_target)

    zeta_open_hat = [s["rows"][t_open]["zeta_e"] for s in base["per_seed"]]
    zeta_closed_hat = [s["rows"][t_closed]["zeta_e"] for s in closed["per_seed"]]
    true_increase = closed_target.damping - open_target.damping
    est_increase = np.array(zeta_closed_hat) - np.array(zeta_open_hat)
    increase_err = np.abs(est_increase - true_increase) / abs(true_increase)

    block_ratios = _block_change_ratios(base, closed)

    checks = [
        _check("true_zeta_increase", true_increase, 0.0, op=">"),
        _check("median_estimated_zeta_increase", float(np.median(est_increase)), 0.0, op=">"),
        _check("median_increase_relative_error", float(np.median(increase_err)), 0.30),
        _check("median_offblock_change_ratio", float(np.median(block_ratios)), 0.10),
    ]
    if case == "noise":
        clean = run_case(fixture, "II", seeds, sim_cfg, est_cfg)
        degr_f, degr_z = _degradation(clean.mode_table, closed["table"])
        checks.append(_check("freq_median_degradation_pp", degr_f, 2.0))
        checks.append(_check("zeta_median_degradation_pp", degr_z, 2.0))

    table = closed["table"]
    return ExperimentReport(
        case_id=case, fixture=fixture.name, seeds=seeds,
        mode_table=tuple(table),
        per_seed=tuple(closed["per_seed"]),
        shape_scores=tuple(closed["shape_scores"]),
        participation_error=float(np.median(closed["part_errors"])),
        target_mode={
            "f_a": closed_target.freq,
            "zeta_open": open_target.damping,
            "zeta_closed": closed_target.damping,
            "zeta_open_hat_median": float(np.median(zeta_open_hat)),
            "zeta_closed_hat_median": float(np.median(zeta_closed_hat)),
            **gain_info,
        },
        checks=tuple(checks),
        diagnostics=_median_diagnostics(closed["per_seed"]),
    )


def _median_diagnostics(per_seed):
    keys = ("cond_c", "spectral_radius", "imag_residual")
    return {k: float(np.median([s["diagnostics"][k] for s in per_seed])) for k in keys}


def _block_change_ratios(base, closed):
    """Estimated closed-minus-open change in the angle columns vs speed-speed.

    Speed feedback only reshapes how the state matrix acts on the speeds;
    the angle columns (the synchronizing structure) must stay put.  The
    angle-row/speed-column block is excluded: its entries are the fixed
    base-speed scaling, orders of magnitude above the feedback change, so
    even sub-percent sampling noise there dwarfs the speed-speed change in
    absolute norm.
    """
    n = base["truth_ss"].n_states
    n_a = n - (n + 1) // 2
    ratios = []
    for open_est, closed_est in zip(base["estimates"], closed["estimates"]):
        diff = closed_est.a_hat - open_est.a_hat
        ww = diff[n_a:, n_a:]
        angle_cols = diff[:, :n_a]
        ratios.append(np.linalg.norm(angle_cols) / np.linalg.norm(ww))
    return ratios


def _degradation(clean_table, noisy_table):
    """Growth of the error table's medians, in percentage points.

    Taken over the table (median across modes of the per-mode medians):
    individual rows legitimately move by a few points either way even when
    the overall accuracy is intact.
    """
    df = np.median([r["freq_error_median_pct"] for r in noisy_table]) - \
        np.median([r["freq_error_median_pct"] for r in clean_table])
    dz = np.median([r["zeta_error_median_pct"] for r in noisy_table]) - \
        np.median([r["zeta_error_median_pct"] for r in clean_table])
    return max(float(df), 0.0), max(float(dz), 0.0)
