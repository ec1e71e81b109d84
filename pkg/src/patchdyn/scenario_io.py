"""Scenario file loading/writing and result serialization.

Scenarios are JSON documents with sections bodies[], initial_state, forces,
horizon, costs, constraints, and solver. Unknown keys are rejected. Bodies
may be given as vertex lists (converted to unit-row halfspace form with the
center of mass at the origin, uniform density) or directly as halfspaces.
Results are written as trajectory.csv / events.csv / stats.json, and order
studies as order_study.csv; floats are serialized with 17 significant
digits so a round trip through CSV is exact.
"""

import csv
import json
import os
from dataclasses import replace

import numpy as np

from .errors import ParseError, ValidationError
from .geom2d import PaddedPolytope2D
from .mpcc import HomotopySettings
from .nlpsolver import IpSettings
from .runtime import Scenario

_FMT = "%.17g"

_BODY_KEYS = {"vertices", "halfspaces", "r", "mass", "inertia", "static"}
_TOP_KEYS = {
    "bodies", "initial_state", "forces", "horizon",
    "costs", "constraints", "solver",
}
_STATE_KEYS = {"q", "nu"}
_FORCE_KEYS = {"f_const", "B", "damping", "u_fixed"}
_HORIZON_KEYS = {"T", "N", "N_FE", "n_s"}
_COST_KEYS = {"u_weight", "terminal_target", "terminal_weight"}
_CONSTRAINT_KEYS = {"u_lb", "u_ub", "q_lb", "q_ub"}
_SOLVER_KEYS = {
    "sigma0", "kappa", "sigma_min", "comp_tol", "rho0",
    "max_penalty_stages", "tol_kkt", "max_iter", "h_E",
}


def _check_keys(section, data, allowed):
    if not isinstance(data, dict):
        raise ParseError(f"section '{section}' must be an object")
    unknown = set(data) - allowed
    if unknown:
        raise ParseError(
            f"unknown key(s) {sorted(unknown)} in '{section}'; "
            f"allowed: {sorted(allowed)}"
        )


def _finite_array(section, key, value, shape=None):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{section}.{key} must be finite")
    if shape is not None and arr.shape != shape:
        raise ParseError(f"{section}.{key} must have shape {shape}, got {arr.shape}")
    return arr


def polygon_properties(vertices):
    """Area, centroid, and second polar moment per unit density.

    Vertices must wind counterclockwise around a simple polygon.
    """
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * np.sum(cross)
    if area <= 0:
        raise ValidationError("vertices must wind counterclockwise (positive area)")
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    # polar second moment about the centroid, unit density
    xs, ys = x - cx, y - cy
    xsn, ysn = np.roll(xs, -1), np.roll(ys, -1)
    crs = xs * ysn - xsn * ys
    ix = np.sum(crs * (ys * ys + ys * ysn + ysn * ysn)) / 12.0
    iy = np.sum(crs * (xs * xs + xs * xsn + xsn * xsn)) / 12.0
    return area, np.array([cx, cy]), ix + iy


def vertices_to_halfspaces(vertices):
    """Unit-row halfspace form of a CCW polygon, centered at its centroid."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise ParseError("vertices must be an (n>=3, 2) array")
    _, com, _ = polygon_properties(v)
    v = v - com
    edges = np.roll(v, -1, axis=0) - v
    normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
    lens = np.linalg.norm(normals, axis=1)
    if np.any(lens < 1e-12):
        raise ValidationError("polygon has a degenerate (zero-length) edge")
    normals /= lens[:, None]
    offsets = np.sum(normals * v, axis=1)
    return normals, offsets


def _parse_body(i, data):
    section = f"bodies[{i}]"
    _check_keys(section, data, _BODY_KEYS)
    if ("vertices" in data) == ("halfspaces" in data):
        raise ParseError(f"{section}: give exactly one of 'vertices' or 'halfspaces'")
    r = float(data.get("r", 0.0))
    if "vertices" in data:
        A, b = vertices_to_halfspaces(
            _finite_array(section, "vertices", data["vertices"])
        )
    else:
        hs = data["halfspaces"]
        _check_keys(f"{section}.halfspaces", hs, {"A", "b"})
        A = _finite_array(section, "halfspaces.A", hs["A"])
        b = _finite_array(section, "halfspaces.b", hs["b"])
    if np.any(b - r <= 0):
        raise ValidationError(
            f"{section}: padding radius must satisfy b - r > 0 for every "
            f"halfspace (the deflated core must contain the origin)"
        )
    static = bool(data.get("static", False))
    mass = np.inf if static else float(data.get("mass", 1.0))
    inertia = np.inf if static else float(data.get("inertia", 1.0))
    return PaddedPolytope2D(A, b, r, mass=mass, inertia=inertia)


def load_scenario(path):
    """Parse and validate a scenario file into a Scenario."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    return scenario_from_dict(data)


def scenario_from_dict(data):
    _check_keys("scenario", data, _TOP_KEYS)
    for req in ("bodies", "initial_state", "horizon"):
        if req not in data:
            raise ParseError(f"missing required section '{req}'")
    if not isinstance(data["bodies"], list) or len(data["bodies"]) != 2:
        raise ParseError("bodies must be a list of exactly two bodies")
    bodies = tuple(_parse_body(i, b) for i, b in enumerate(data["bodies"]))

    st = data["initial_state"]
    _check_keys("initial_state", st, _STATE_KEYS)
    q0 = _finite_array("initial_state", "q", st.get("q", np.zeros(6)), (6,))
    nu0 = _finite_array("initial_state", "nu", st.get("nu", np.zeros(6)), (6,))

    hz = data["horizon"]
    _check_keys("horizon", hz, _HORIZON_KEYS)
    if "T" not in hz:
        raise ParseError("horizon.T is required")
    kw = dict(
        bodies=bodies,
        q0=q0,
        nu0=nu0,
        T=float(hz["T"]),
        N=int(hz.get("N", 1)),
        N_FE=int(hz.get("N_FE", 2)),
        n_s=int(hz.get("n_s", 2)),
    )

    fr = data.get("forces", {})
    _check_keys("forces", fr, _FORCE_KEYS)
    kw["f_const"] = _finite_array("forces", "f_const", fr.get("f_const", np.zeros(6)), (6,))
    B = _finite_array("forces", "B", fr.get("B", np.zeros((6, 0))))
    if B.size and (B.ndim != 2 or B.shape[0] != 6):
        raise ParseError("forces.B must have six rows")
    kw["B"] = B.reshape(6, -1)
    kw["damping"] = _finite_array("forces", "damping", fr.get("damping", np.zeros(6)), (6,))
    if "u_fixed" in fr:
        kw["u_fixed"] = _finite_array(
            "forces", "u_fixed", fr["u_fixed"], (kw["N"], kw["B"].shape[1])
        )

    co = data.get("costs", {})
    _check_keys("costs", co, _COST_KEYS)
    for key in _COST_KEYS:
        if key in co:
            kw[key] = _finite_array("costs", key, co[key])

    cn = data.get("constraints", {})
    _check_keys("constraints", cn, _CONSTRAINT_KEYS)
    for key in _CONSTRAINT_KEYS:
        if key in cn:
            kw[key] = np.asarray(cn[key], dtype=float)

    sv = data.get("solver", {})
    _check_keys("solver", sv, _SOLVER_KEYS)
    hs = HomotopySettings()
    for key in ("sigma0", "kappa", "sigma_min", "comp_tol", "rho0"):
        if key in sv:
            hs = replace(hs, **{key: float(sv[key])})
    if "max_penalty_stages" in sv:
        hs = replace(hs, max_penalty_stages=int(sv["max_penalty_stages"]))
    ips = IpSettings()
    if "tol_kkt" in sv:
        ips = replace(ips, tol_kkt=float(sv["tol_kkt"]))
    if "max_iter" in sv:
        ips = replace(ips, max_iter=int(sv["max_iter"]))
    kw["homotopy"] = hs
    kw["ip"] = ips
    if "h_E" in sv:
        kw["h_E"] = float(sv["h_E"])

    return Scenario(**kw)


def scenario_to_dict(scn):
    def body_dict(b):
        out = {
            "halfspaces": {"A": b.A.tolist(), "b": b.b.tolist()},
            "r": b.r,
        }
        if not np.isfinite(b.mass):
            out["static"] = True
        else:
            out["mass"] = b.mass
            out["inertia"] = b.inertia
        return out

    data = {
        "bodies": [body_dict(b) for b in scn.bodies],
        "initial_state": {"q": scn.q0.tolist(), "nu": scn.nu0.tolist()},
        "forces": {
            "f_const": scn.f_const.tolist(),
            "B": np.asarray(scn.B).tolist(),
            "damping": scn.damping.tolist(),
        },
        "horizon": {"T": scn.T, "N": scn.N, "N_FE": scn.N_FE, "n_s": scn.n_s},
        "solver": {
            "sigma0": scn.homotopy.sigma0,
            "kappa": scn.homotopy.kappa,
            "sigma_min": scn.homotopy.sigma_min,
            "tol_kkt": scn.ip.tol_kkt,
            "h_E": scn.h_E,
        },
    }
    if scn.u_fixed is not None:
        data["forces"]["u_fixed"] = np.asarray(scn.u_fixed).tolist()
    costs = {}
    for key in ("u_weight", "terminal_target", "terminal_weight"):
        val = getattr(scn, key)
        if val is not None:
            costs[key] = np.asarray(val).tolist()
    if costs:
        data["costs"] = costs
    cons = {}
    for key in ("u_lb", "u_ub", "q_lb", "q_ub"):
        val = getattr(scn, key)
        if val is not None:
            cons[key] = np.asarray(val).tolist()
    if cons:
        data["constraints"] = cons
    return data


def write_scenario(scn, path):
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scn), fh, indent=2)
        fh.write("\n")


TRAJECTORY_HEADER = (
    ["t"]
    + [f"q{i}" for i in range(6)]
    + [f"nu{i}" for i in range(6)]
    + ["lambda", "alpha", "Lambda", "p_x", "p_y", "h_element"]
)


def write_trajectory_csv(traj, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRAJECTORY_HEADER)
        for t, q, nu, lam, alpha, Lam, px, py, h in traj.rows():
            vals = [t, *q, *nu, lam, alpha, Lam, px, py, h]
            wr.writerow([_FMT % v for v in vals])


def read_trajectory_csv(path):
    """Rows of trajectory.csv as a float array (header checked)."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != TRAJECTORY_HEADER:
            raise ParseError(f"{path}: unexpected header {header}")
        return np.array([[float(v) for v in row] for row in rd])


def write_events_csv(events, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "kind", "details"])
        for ev in events:
            wr.writerow([_FMT % ev.t, ev.kind, json.dumps(ev.details)])


def write_stats_json(stats, path):
    with open(path, "w") as fh:
        json.dump(stats, fh, indent=2, default=float)
        fh.write("\n")


def write_order_study_csv(result, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step_count", "h_nominal", "terminal_error", "slope"])
        for n, h, err in result.rows():
            wr.writerow([n, _FMT % h, _FMT % err, _FMT % result.slope])


def write_outputs(traj, outdir):
    """trajectory.csv + events.csv + stats.json into outdir."""
    os.makedirs(outdir, exist_ok=True)
    write_trajectory_csv(traj, os.path.join(outdir, "trajectory.csv"))
    write_events_csv(traj.events, os.path.join(outdir, "events.csv"))
    write_stats_json(traj.stats, os.path.join(outdir, "stats.json"))
