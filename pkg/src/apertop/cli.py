"""Config-driven experiment runner.

Commands: gen, verify, run, sweep, export.  Configs are plain JSON with no
executable content; all randomness derives from the single top-level seed
through numpy SeedSequence spawning, so identical configs produce
byte-identical reports (timestamps live only in the manifest).

Exit codes: 0 ok, 1 numerical failure (tolerance breach, unresolved index),
2 config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .delone import (
    Box,
    DeloneError,
    DeloneSet,
    generate_amorphous,
    generate_cut_and_project,
    generate_periodic,
    load_lattice,
    perturb,
    save_csv,
    save_lattice,
    verify_delone,
)
from .boundary import bulk_boundary_check
from .hamiltonians import (
    GaplessError,
    chiral_ssh_symmetry,
    diagonalize,
    exp_hopping,
    fermi_projection,
    fermi_unitary,
    kitaev_chain,
    nn_hofstadter,
    qwz_model,
    spectral_gap,
    ssh_chain,
)
from .invariants import (
    UnresolvedIndexError,
    chern_even,
    fredholm_even,
    residue_check,
    sign_position_compression,
    sobolev_norm,
    weak_invariant,
    winding_odd,
    z2_index,
)
from .operators import MagneticCocycle, OperatorError, s_cover_frame
from .pattern_tree import build_tree, choice_pair, pb_operator, quasi_hom_pairing, tree_to_json
from .kasparov import (
    anticommutator_estimate,
    build_fiber_space,
    log_commutator_scan,
    operator_t,
    operator_x,
    trend_is_bounded,
)


class ConfigError(ValueError):
    pass


def _seed_for(config: dict, label: str) -> int:
    root = int(config.get("seed", 0))
    h = int(hashlib.sha256(label.encode()).hexdigest()[:8], 16)
    return int(np.random.SeedSequence([root, h]).generate_state(1)[0])


def build_lattice(spec: dict, config: dict) -> DeloneSet:
    try:
        gen = spec["generator"]
        window = Box(tuple(b[0] for b in spec["window"]), tuple(b[1] for b in spec["window"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"lattice spec missing key: {exc}") from exc
    if gen == "periodic":
        ds = generate_periodic(spec.get("dimension", window.dimension), spec.get("spacing", 1.0), window)
    elif gen in ("fibonacci", "ammann_beenker"):
        ds = generate_cut_and_project(gen, window, spec.get("offset"))
    elif gen == "amorphous":
        ds = generate_amorphous(
            spec.get("dimension", window.dimension),
            spec["r"],
            spec["target_R"],
            window,
            _seed_for(config, "lattice"),
        )
    else:
        raise ConfigError(f"unknown lattice generator {gen!r}")
    if "perturb" in spec:
        ds = perturb(ds, float(spec["perturb"]), _seed_for(config, "perturb"))
    return ds


def build_model(ds: DeloneSet, spec: dict):
    name = spec.get("name")
    if name == "nn_hofstadter":
        return nn_hofstadter(ds, spec.get("t", 1.0), spec.get("flux", 0.0), spec.get("nn_radius", 1.1))
    if name == "exp_hopping":
        cocycle = MagneticCocycle.from_flux(ds.dimension, spec.get("flux", 0.0))
        return exp_hopping(ds, spec.get("beta", 2.0), cocycle, spec.get("cutoff"))
    if name == "ssh":
        return ssh_chain(spec.get("cells", 60), spec.get("v", 1.0), spec.get("w", 0.5), spec.get("periodic", False))
    if name == "kitaev":
        return kitaev_chain(
            spec.get("cells", 60), spec.get("mu", 1.0), spec.get("t", 1.0),
            spec.get("delta", 0.8), spec.get("periodic", False),
        )
    if name == "qwz":
        return qwz_model(ds, spec.get("m", 1.0), spec.get("nn_radius", 1.1))
    raise ConfigError(f"unknown model {name!r}")


# ---------------------------------------------------------------------------
# tasks


def _task_verify(ds, model, task, config):
    rep = verify_delone(ds)
    return {
        "discrete_ok": rep.discrete_ok,
        "dense_ok": rep.dense_ok,
        "min_pairwise": rep.min_pairwise,
        "worst_gap_center": list(rep.worst_gap_center),
        "n_points": len(ds),
    }, rep.ok


def _task_spectrum(ds, model, task, config):
    sd = diagonalize(model)
    return {"eigenvalues": sd.eigenvalues.tolist(), "n": len(sd.eigenvalues)}, True


def _task_chern(ds, model, task, config):
    sd = spectral_gap(model, float(task["e_hint"]))
    if sd.gapless:
        raise GaplessError("no gap near e_hint")
    P = fermi_projection(sd)
    margin = task.get("bulk_margin")
    report = chern_even(P, task.get("dirs", [0, 1]), margin)
    out = report.to_dict()
    out["gap"] = list(sd.gap)
    if task.get("oracle", True):
        origin = task.get("origin")
        if origin is None:
            c = model.sites.mean(axis=0)
            origin = (float(c[0]) + 0.5031, float(c[1]) + 0.4973)
        idx = fredholm_even(P, origin)
        out["oracle_index"] = idx
        out["oracle_agrees"] = bool(idx == report.rounded)
    ok = out.get("oracle_agrees", True) and report.deviation < task.get("round_tol", 0.2)
    return out, ok


def _task_winding(ds, model, task, config):
    sd = spectral_gap(model, float(task.get("e_hint", 0.0)))
    if sd.gapless:
        raise GaplessError("no gap near e_hint")
    u = fermi_unitary(model, chiral_ssh_symmetry())
    report = winding_odd(u, task.get("dirs", [0]))
    return report.to_dict(), True


def _task_weak(ds, model, task, config):
    sd = spectral_gap(model, float(task.get("e_hint", 0.0)))
    if sd.gapless:
        raise GaplessError("no gap near e_hint")
    kind = task.get("class", "projection")
    if kind == "projection":
        op = fermi_projection(sd)
    else:
        op = fermi_unitary(model, chiral_ssh_symmetry())
    report = weak_invariant(op, task["dirs"])
    return report.to_dict(), True


def _task_z2(ds, model, task, config):
    sd = spectral_gap(model, float(task.get("e_hint", 0.0)))
    if sd.gapless:
        raise GaplessError("no gap near e_hint")
    P = fermi_projection(sd)
    origin = task.get("origin")
    if origin is None:
        coords = model.sites[:, 0]
        origin = float(np.median(coords)) + 0.261
    A, _ = sign_position_compression(P, task.get("direction", 0), origin)
    idx = z2_index(A)
    return {"z2": idx, "origin": origin}, True


def _task_bulk_boundary(ds, model, task, config):
    kwargs = {}
    if model.dimension == 1:
        kwargs["chiral"] = chiral_ssh_symmetry()
        if task.get("bulk_periodic", True):
            spec = dict(config["model"])
            spec["periodic"] = True
            kwargs["bulk_h"] = build_model(ds, spec)
    result = bulk_boundary_check(
        model,
        float(task["e_hint"]),
        direction=task.get("direction"),
        cut=task.get("cut"),
        bb_tol=task.get("bb_tol", 0.1),
        **kwargs,
    )
    out = {
        "dimension": result["dimension"],
        "sign": result["sign"],
        "agree": result["agree"],
        "gap": list(result["gap"]),
        "bulk": result["bulk"].to_dict(),
    }
    if "boundary" in result:
        out["boundary"] = result["boundary"].to_dict()
        out["decay_profile"] = result["decay_profile"]
    else:
        out["oracle_index"] = result["oracle_index"]
        out["zero_modes_per_boundary"] = result["zero_modes_per_boundary"]
    return out, bool(result["agree"])


def _task_tree(ds, model, task, config):
    tree = build_tree(ds, int(task.get("depth", 3)))
    pair = choice_pair(tree, _seed_for(config, "choice"))
    D = pb_operator(tree, task.get("zeta", "log"))
    eigs = np.linalg.eigvalsh(D.matrix)
    out = tree_to_json(tree)
    out["pb_eigenvalues"] = eigs.tolist()
    out["degenerate_choices"] = len(pair.degenerate)
    return out, True


def _task_pairing(ds, model, task, config):
    tree = build_tree(ds, int(task.get("depth", 3)))
    pair = choice_pair(tree, _seed_for(config, "choice"))
    level = int(task.get("level", 1))
    values = []
    for v in tree.levels[level]:
        values.append(quasi_hom_pairing(tree, pair, v.patch, level))
    return {"level": level, "pairings": values}, True


def _task_product_check(ds, model, task, config):
    depth = int(task.get("depth", 2))
    eps = float(task.get("eps", 0.2))
    pitch = float(task.get("pitch", eps * 0.9))
    frame = s_cover_frame(ds, eps, pitch)
    tree = build_tree(ds, depth)
    pair = choice_pair(tree, _seed_for(config, "choice"))
    fs = build_fiber_space(ds, tree, pair, depth * tree.R + 1.0)
    X = operator_x(fs)
    T = operator_t(fs, frame)
    est = anticommutator_estimate(fs, X, T, task.get("trials", 100), _seed_for(config, "anticomm"))
    ok = est["max_ratio"] <= 2 * eps + 1e-9
    return {"anticommutator": est, "bound_2eps": 2 * eps, "dimension": fs.total_dimension()}, ok


def _task_residue(ds, model, task, config):
    s_values = task.get("s_values", [ds.dimension + 0.05, ds.dimension + 0.1])
    out = residue_check(ds, s_values)
    ok = out["relative_error"] < task.get("tol", 0.05)
    return out, ok


def _task_sobolev(ds, model, task, config):
    val = sobolev_norm(model, int(task.get("order", 1)), int(task.get("power", 2)))
    return {"order": task.get("order", 1), "power": task.get("power", 2), "value": val}, True


TASKS = {
    "verify": _task_verify,
    "spectrum": _task_spectrum,
    "chern": _task_chern,
    "winding": _task_winding,
    "weak": _task_weak,
    "z2": _task_z2,
    "bulk-boundary": _task_bulk_boundary,
    "tree": _task_tree,
    "pairing": _task_pairing,
    "product-check": _task_product_check,
    "residue": _task_residue,
    "sobolev": _task_sobolev,
}


# ---------------------------------------------------------------------------
# runner


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def run_config(config: dict, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        tasks = config["tasks"]
        if not isinstance(tasks, list) or not tasks:
            raise ConfigError("tasks must be a non-empty list")
        for t in tasks:
            if t.get("task") not in TASKS:
                raise ConfigError(f"unknown task {t.get('task')!r}")
        ds = build_lattice(config["lattice"], config)
        model = build_model(ds, config["model"]) if "model" in config else None
    except (ConfigError, KeyError, DeloneError, OperatorError) as exc:
        _write_json(out_dir / "error.json", {"error": str(exc), "kind": "config"})
        return 2
    status = 0
    outputs = []
    for k, t in enumerate(tasks):
        name = t["task"]
        fname = f"{k:02d}_{name.replace('-', '_')}.json"
        try:
            payload, ok = TASKS[name](ds, model, t, config)
            payload = {"task": name, "ok": bool(ok), "result": payload}
            if not ok:
                status = max(status, 1)
        except (GaplessError, UnresolvedIndexError, OperatorError, DeloneError) as exc:
            payload = {"task": name, "ok": False, "error": str(exc)}
            status = max(status, 1)
        _write_json(out_dir / fname, payload)
        outputs.append(fname)
    manifest = {
        "config_sha256": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()
        ).hexdigest(),
        "version": __version__,
        "numpy": np.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "outputs": {f: _sha256(out_dir / f) for f in outputs},
    }
    _write_json(out_dir / "manifest.json", manifest)
    return status


def _set_by_path(config: dict, dotted: str, value):
    parts = dotted.split(".")
    node = config
    for p in parts[:-1]:
        if p not in node:
            raise ConfigError(f"sweep axis {dotted!r}: missing key {p!r}")
        node = node[p]
    last = parts[-1]
    if last not in node or not isinstance(node[last], (int, float)):
        raise ConfigError(f"sweep axis {dotted!r} must address a numeric key")
    node[last] = value


def sweep_config(config: dict, axis: str, values, out_dir: Path, threads: int = 1) -> int:
    if not values:
        raise ConfigError("empty sweep value list")
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(val):
        sub = json.loads(json.dumps(config))
        _set_by_path(sub, axis, val)
        sub_dir = out_dir / f"{axis.replace('.', '_')}={val:g}"
        t0 = time.perf_counter()
        code = run_config(sub, sub_dir)
        return val, sub_dir, code, time.perf_counter() - t0

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, values))
    else:
        results = [one(v) for v in values]
    rows = []
    status = 0
    for val, sub_dir, code, dt in sorted(results, key=lambda r: r[0]):
        status = max(status, code)
        row = {"value": val, "exit": code, "runtime": round(dt, 3)}
        for rep in sorted(sub_dir.glob("*_*.json")):
            payload = json.loads(rep.read_text())
            res = payload.get("result", {})
            if "raw_re" in res:
                row.update(
                    invariant=res["raw_re"], rounded=res["rounded"], deviation=res["deviation"]
                )
        rows.append(row)
    fields = sorted({k for r in rows for k in r})
    with open(out_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    return status


def export_plotdata(report_dir: Path, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    for rep in sorted(report_dir.glob("*.json")):
        payload = json.loads(rep.read_text())
        res = payload.get("result", {})
        stem = rep.stem
        if "eigenvalues" in res:
            with open(out_dir / f"{stem}_spectrum.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["index", "eigenvalue"])
                w.writerows(enumerate(res["eigenvalues"]))
        if "decay_profile" in res:
            with open(out_dir / f"{stem}_edge_profile.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["distance", "row_norm"])
                w.writerows(res["decay_profile"])
        if "pb_eigenvalues" in res:
            with open(out_dir / f"{stem}_pb_spectrum.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["index", "eigenvalue"])
                w.writerows(enumerate(res["pb_eigenvalues"]))
    return 0


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="apertop")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a lattice sample")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=None)

    p_ver = sub.add_parser("verify", help="verify a saved lattice")
    p_ver.add_argument("--lattice", required=True)

    p_run = sub.add_parser("run", help="run a config pipeline")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=1)

    p_sweep = sub.add_parser("sweep", help="sweep one numeric config key")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--axis", required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated numbers")
    p_sweep.add_argument("--threads", type=int, default=1)
    p_sweep.add_argument("--seed", type=int, default=None)

    p_exp = sub.add_parser("export", help="export plot-ready CSV bundles")
    p_exp.add_argument("--reports", required=True)
    p_exp.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            ds = load_lattice(args.lattice)
            rep = verify_delone(ds)
            print(json.dumps({"discrete_ok": rep.discrete_ok, "dense_ok": rep.dense_ok,
                              "min_pairwise": rep.min_pairwise}, sort_keys=True))
            return 0 if rep.ok else 1
        config = json.loads(Path(args.config).read_text())
        if getattr(args, "seed", None) is not None:
            config["seed"] = args.seed
        if args.command == "gen":
            ds = build_lattice(config["lattice"], config)
            out = Path(args.out)
            save_lattice(ds, out)
            save_csv(ds, out.with_suffix(".csv"))
            print(f"wrote {out} ({len(ds)} points)")
            return 0
        if args.command == "run":
            return run_config(config, Path(args.out))
        if args.command == "sweep":
            values = [float(v) for v in args.values.split(",") if v.strip()]
            return sweep_config(config, args.axis, values, Path(args.out), args.threads)
        if args.command == "export":
            return export_plotdata(Path(args.reports), Path(args.out))
    except (ConfigError, json.JSONDecodeError, FileNotFoundError, KeyError, DeloneError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
