"""On-disk formats: model files, trajectory CSV, matrix CSV, run manifests.

Model files are JSON with machines/vscs/admittance sections; complex
admittances are stored as [re, im] pairs.  Trajectories are CSV with a
`time,delta_1..delta_n,omega_1..omega_n` header and a same-basename JSON
sidecar holding dt, seed and the model hash.
"""

import csv
import hashlib
import json
import numpy as np
from dataclasses import dataclass, asdict
from pathlib import Path

from .network import MachineSet, ReducedAdmittance, SystemModel, VscSet, kron_reduce
from .simulate import Trajectory

TOOL_VERSION = "0.1.0"


def _complex_pairs(a):
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def _from_pairs(rows):
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def model_to_dict(model):
    return {
        "machines": {
            "inertia": model.machines.inertia.tolist(),
            "damping": model.machines.damping.tolist(),
            "emf": model.machines.emf.tolist(),
            "p_mech": model.machines.p_mech.tolist(),
            "sigma": model.machines.sigma.tolist(),
            "omega0": float(model.machines.omega0),
        },
        "vscs": {
            "p_ref": model.vscs.p_ref.tolist(),
            "q_ref": model.vscs.q_ref.tolist(),
            "k1": model.vscs.k1.tolist(),
            "k2": model.vscs.k2.tolist(),
        },
        "admittance": {"reduced": _complex_pairs(model.admittance.y)},
    }


def model_from_dict(doc):
    mach = doc["machines"]
    machines = MachineSet(
        inertia=mach["inertia"], damping=mach["damping"], emf=mach["emf"],
        p_mech=mach["p_mech"], sigma=mach["sigma"],
        omega0=float(mach.get("omega0", 2.0 * np.pi * 60.0)),
    )
    v = doc.get("vscs", {})
    if v and len(v.get("p_ref", [])):
        vscs = VscSet(p_ref=v["p_ref"], q_ref=v["q_ref"],
                      k1=np.asarray(v["k1"], dtype=float),
                      k2=np.asarray(v["k2"], dtype=float))
    else:
        vscs = VscSet.none()
    adm = doc["admittance"]
    if "reduced" in adm:
        admittance = ReducedAdmittance(y=_from_pairs(adm["reduced"]))
    elif "full" in adm:
        admittance = kron_reduce(_from_pairs(adm["full"]), adm["retained"])
    else:
        raise ValueError("admittance section needs 'reduced' or 'full'+'retained'")
    return SystemModel(machines=machines, vscs=vscs, admittance=admittance)


def save_model(model, path):
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), indent=2) + "\n")
    return path


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


def model_hash(model):
    """Stable content hash of the model file representation."""
    canon = json.dumps(model_to_dict(model), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _sidecar(path):
    path = Path(path)
    return path.with_suffix(".json") if path.suffix != ".json" else Path(str(path) + ".meta")


def save_trajectory(traj, path, meta=None):
    path = Path(path)
    n_d, n_w = traj.delta.shape[1], traj.omega.shape[1]
    header = (["time"]
              + [f"delta_{i + 1}" for i in range(n_d)]
              + [f"omega_{i + 1}" for i in range(n_w)])
    times = traj.times
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(traj.n_samples):
            writer.writerow([f"{times[k]:.6f}"]
                            + [f"{x:.17g}" for x in traj.delta[k]]
                            + [f"{x:.17g}" for x in traj.omega[k]])
    doc = {"t0": traj.t0, "dt": traj.dt, "n_samples": traj.n_samples,
           "labels": list(traj.labels)}
    doc.update(meta or {})
    _sidecar(path).write_text(json.dumps(doc, indent=2) + "\n")
    return path


def load_trajectory(path):
    """Returns (Trajectory, metadata dict); metadata may be empty."""
    path = Path(path)
    with path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.array(rows)
    d_cols = [i for i, name in enumerate(header) if name.startswith("delta_")]
    w_cols = [i for i, name in enumerate(header) if name.startswith("omega_")]
    if not d_cols or not w_cols or header[0] != "time":
        raise ValueError(f"{path} is not a trajectory file (header {header[:3]}...)")
    times = data[:, 0]
    dt = float(np.median(np.diff(times))) if len(times) > 1 else 1.0

    meta = {}
    side = _sidecar(path)
    if side.exists():
        meta = json.loads(side.read_text())
        dt = float(meta.get("dt", dt))
    labels = tuple(meta.get("labels", ()) or (f"G{i + 1}" for i in range(len(w_cols))))
    traj = Trajectory(t0=float(times[0]) if len(times) else 0.0, dt=dt,
                      delta=np.ascontiguousarray(data[:, d_cols]),
                      omega=np.ascontiguousarray(data[:, w_cols]), labels=labels)
    return traj, meta


def save_matrix(a, path, labels=()):
    path = Path(path)
    with path.open("w", newline="") as fh:
        if labels:
            fh.write("# " + ",".join(labels) + "\n")
        writer = csv.writer(fh)
        for row in np.atleast_2d(np.asarray(a, dtype=float)):
            writer.writerow([f"{x:.17g}" for x in row])
    return path


def load_matrix(path):
    labels = ()
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                labels = tuple(s.strip() for s in line[1:].split(","))
                continue
            rows.append([float(x) for x in line.split(",")])
    return np.array(rows), labels


def save_json(doc, path):
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


@dataclass(frozen=True)
class RunManifest:
    command: str
    inputs: tuple
    overrides: dict
    output_dir: str
    seed: int | None
    tool_version: str = TOOL_VERSION


def write_manifest(manifest, out_path):
    """Manifest goes alongside the output, named <output>.manifest.json."""
    out_path = Path(out_path)
    target = out_path.parent / (out_path.name + ".manifest.json")
    save_json(asdict(manifest), target)
    return target
