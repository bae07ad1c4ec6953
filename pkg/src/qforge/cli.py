"""Command-line experiment runner.

    qforge <experiment> [--config FILE] [--set key=value ...] [--seed S] [--workers W] [--out DIR]
    qforge summary DIR

Every run writes ``<experiment>.csv`` (deterministic for a given config and
seed) and ``<experiment>.json`` (config, metrics, wall time, versions).
Exit codes: 0 success, 2 configuration error, 3 numerical-contract violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .circuit import StateVector, brickwall_schedule, run_brickwall, subsystem_entropy
from .contraction import ContractionStats, contract, find_path, load_path, random_network, save_path
from .fgs import kitaev_entropy_scan
from .hamiltonian import heisenberg_terms, pauli_sum_to_coo, tfim_terms
from .lattice import build_lattice
from .numerics import NumericalContractError, RngStream, rng_split
from .shadows import estimate_pauli, random_bases, shadow_snapshots
from .stabilizer import clifford_mipt_trajectory
from .timeevol import lanczos_ground
from .variational import (SubspaceProblem, dimer_state, exchange_ansatz, subspace_loss,
                          subspace_optimize, subspace_spectrum, tfim_ansatz, tfim_ramp_parameters, vqe_run)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    out: str = "runs"


@dataclass
class Report:
    header: list
    rows: list
    metrics: dict
    extra_files: dict = field(default_factory=dict)  # name -> text


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# -- experiments ---------------------------------------------------------------


def _ground_energy(h, n):
    if n <= 12:
        return float(np.linalg.eigvalsh(pauli_sum_to_coo(h).to_dense())[0])
    return float(lanczos_ground(pauli_sum_to_coo(h), rng=RngStream(0))[0])


def exp_vqe_tfim(p, seed, workers):
    n, layers = p["n"], p["layers"]
    h = tfim_terms(build_lattice("chain", n), p["g"])
    ans = tfim_ansatz(n, layers)
    streams = rng_split(RngStream(seed), p["seeds"])
    batch = [s.gen.normal(scale=p["init_scale"], size=ans.num_params) for s in streams]
    if p["init"] == "ramp":
        batch = [tfim_ramp_parameters(n, layers, p["g"]) + b for b in batch]
    res = vqe_run(ans, None, h, p["steps"], p["lr"], p["grad_mode"], batch=batch, workers=workers)
    rows = [(step, k, e) for k, tr in enumerate(res.traces) for step, e in enumerate(tr)]
    exact = _ground_energy(h, n)
    return Report(["step", "seed", "energy"], rows,
                  {"best_energy": res.best_energy, "exact_energy": exact,
                   "error": res.best_energy - exact, "n": n},
                  {"vqe-tfim.params.json": json.dumps([t.tolist() for t in res.thetas])})


def exp_kitaev_scan(p, seed, workers):
    grid = np.round(np.arange(p["mu_min"], p["mu_max"] + 0.5 * p["mu_step"], p["mu_step"]), 10)
    curve, best = kitaev_entropy_scan(p["L"], p["t"], p["delta"], grid)
    return Report(["mu", "entropy_bits"], curve,
                  {"argmax_mu": best, "max_entropy_bits": max(e for _, e in curve), "L": p["L"]})


def exp_mipt_clifford(p, seed, workers):
    rows, means = [], {}
    cells = [(L, pr) for L in p["L"] for pr in p["p"]]
    for (L, pr), cell in zip(cells, rng_split(RngStream(seed), len(cells))):
        streams = rng_split(cell, p["trajectories"])
        depth = p["depth_factor"] * L
        ents = _map(lambda s: clifford_mipt_trajectory(L, depth, pr, s), streams, workers)
        rows += [(L, pr, k, e) for k, e in enumerate(ents)]
        means.setdefault(str(L), {})[str(pr)] = float(np.mean(ents))
    return Report(["L", "p", "trajectory", "entropy_bits"], rows, {"mean_entropy": means})


def exp_mipt_haar(p, seed, workers):
    N, D = p["N"], p["D"]
    rows, means = [], {}
    for pr, cell in zip(p["p"], rng_split(RngStream(seed), len(p["p"]))):
        def one(s):
            a, b = rng_split(s, 2)
            state, _, prob = run_brickwall(brickwall_schedule(N, D, pr, a), b)
            return subsystem_entropy(state, range(N // 2)), float(np.log(prob))
        out = _map(one, rng_split(cell, p["trajectories"]), workers)
        rows += [(N, pr, k, e, lp) for k, (e, lp) in enumerate(out)]
        means[str(pr)] = float(np.mean([e for e, _ in out]))
    return Report(["N", "p", "trajectory", "entropy_bits", "log_prob"], rows,
                  {"mean_entropy": {str(N): means}})


def _shadow_state(kind, n, stream):
    if kind == "zero":
        return StateVector.zero(n)
    if kind == "ghz":
        a = np.zeros(2**n, dtype=complex)
        a[0] = a[-1] = 2**-0.5
        return StateVector(a, n)
    if kind == "random_product":
        amps = np.ones(1, dtype=complex)
        for _ in range(n):
            v = stream.gen.normal(size=2) + 1j * stream.gen.normal(size=2)
            amps = np.kron(amps, v / np.linalg.norm(v))
        return StateVector(amps, n)
    raise ConfigError(f"state: unknown kind {kind!r}")


def exp_shadow_gen(p, seed, workers):
    n, M = p["n"], p["M"]
    s_state, s_bases, s_meas = rng_split(RngStream(seed), 3)
    psi = _shadow_state(p["state"], n, s_state)
    ds = shadow_snapshots(psi, random_bases(M, n, s_bases), s_meas, workers=workers)
    z0 = [3] + [0] * (n - 1)
    rows = ["".join(map(str, b)) + ";" + "".join(map(str, o)) for b, o in zip(ds.bases, ds.outcomes)]
    return Report(["bases", "outcomes"], [r.split(";") for r in rows],
                  {"n": n, "M": M, "z0_estimate": estimate_pauli(ds, z0)},
                  {"shadow-gen.dataset.csv": ds.to_csv()})


def exp_bench_hamiltonian(p, seed, workers):
    rows, timings = [], {}
    for n in p["sizes"]:
        h = tfim_terms(build_lattice("chain", n, pbc=p["pbc"]), p["g"])
        t0 = time.perf_counter()
        m = pauli_sum_to_coo(h, workers=workers)
        timings[str(n)] = time.perf_counter() - t0
        rows.append((n, len(h.terms), m.nnz))
    return Report(["n", "terms", "nnz"], rows, {"build_seconds": timings})


def exp_contract(p, seed, workers):
    net = random_network(p["num_tensors"], RngStream(p["network_seed"]), p["edge_prob"],
                         tuple(p["dims"]), p["max_rank"])
    path_file = p["path_file"]
    if path_file and os.path.exists(path_file):
        tree, found = load_path(path_file, net), False
    else:
        tree = find_path(net, p["target_size"], p["max_repeats"], seed)
        found = True
        if path_file:
            save_path(tree, path_file)
    stats = ContractionStats()
    t0 = time.perf_counter()
    val = complex(contract(net, tree, workers, stats))
    return Report(["quantity", "value"],
                  [("value_re", val.real), ("value_im", val.imag),
                   ("num_slices", tree.num_slices), ("flops", tree.costs["flops"]),
                   ("largest_intermediate", tree.costs["largest_intermediate"])],
                  {"value": [val.real, val.imag], "num_slices": tree.num_slices,
                   "flops": tree.costs["flops"], "max_intermediate": stats.max_intermediate,
                   "path_found_here": found, "execute_seconds": time.perf_counter() - t0})


def exp_excited_subspace(p, seed, workers):
    n, k = p["n"], 3
    h = heisenberg_terms(build_lattice("chain", n, pbc=p["pbc"]))
    ans = [exchange_ansatz(n, p["layers"], dimer_state(n, t), p["pbc"], shared=True) for t in (None, "+", "0")]
    prob = SubspaceProblem(ans, h, p["ridge"])
    theta0 = RngStream(seed).gen.normal(scale=p["init_scale"], size=prob.num_params)
    theta, trace = subspace_optimize(prob, theta0, p["steps"], p["lr"])
    _, S, H = subspace_loss(prob, theta)
    spec = subspace_spectrum(S, H)
    exact = np.linalg.eigvalsh(prob.op.toarray())[:k]
    return Report(["step", "loss"], list(enumerate(trace)),
                  {"spectrum": spec.tolist(), "exact": exact.tolist(),
                   "max_error": float(np.max(np.abs(spec[:k] - exact))),
                   "final_loss": float(trace[-1])})


EXPERIMENTS = {
    "vqe-tfim": (exp_vqe_tfim, {"n": 2, "g": 1.0, "layers": 1, "steps": 300, "lr": 2e-2,
                                "seeds": 8, "grad_mode": "parameter_shift", "init_scale": 1.0,
                                "init": "random"}),
    "kitaev-scan": (exp_kitaev_scan, {"L": 200, "t": 1.0, "delta": 1.0, "mu_min": 1.5,
                                      "mu_max": 2.5, "mu_step": 0.05}),
    "mipt-clifford": (exp_mipt_clifford, {"L": [8, 16, 24], "p": [0.05, 0.5],
                                          "trajectories": 200, "depth_factor": 4}),
    "mipt-haar": (exp_mipt_haar, {"N": 8, "D": 8, "p": [0.1, 0.5], "trajectories": 20}),
    "shadow-gen": (exp_shadow_gen, {"n": 20, "M": 256, "state": "random_product"}),
    "bench-hamiltonian": (exp_bench_hamiltonian, {"sizes": [10, 14, 18, 20], "g": 1.0, "pbc": False}),
    "contract": (exp_contract, {"num_tensors": 24, "network_seed": 0, "edge_prob": 0.3,
                                "dims": [2, 3], "max_rank": 5, "target_size": None,
                                "max_repeats": 8, "path_file": None}),
    "excited-subspace": (exp_excited_subspace, {"n": 8, "pbc": True, "layers": 5, "steps": 500,
                                                "lr": 5e-2, "ridge": 1e-6, "init_scale": 0.1}),
}


# -- config handling -------------------------------------------------------------


def _coerce(key, value, default):
    if default is None or value is None:
        return value
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.lower() in ("1", "true", "yes")
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            if not isinstance(value, list):
                value = [value]
            return [_coerce(key, v, default[0]) for v in value] if default else value
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {type(default).__name__}") from None


def resolve_params(name: str, overrides: dict) -> dict:
    if name not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown {name!r}; choose from {', '.join(EXPERIMENTS)}")
    defaults = EXPERIMENTS[name][1]
    unknown = sorted(set(overrides) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown parameter(s) for {name}: {', '.join(unknown)}")
    params = dict(defaults)
    for k, v in overrides.items():
        params[k] = _coerce(k, v, defaults[k])
    _validate(name, params)
    return params


def _validate(name, p):
    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"{key}: {msg}")

    for key in ("n", "steps", "seeds", "trajectories", "M", "L", "N", "D", "layers", "num_tensors"):
        v = p.get(key)
        if isinstance(v, int):
            need(v >= 1, key, "must be >= 1")
    if name == "kitaev-scan":
        need(p["mu_step"] > 0 and p["mu_max"] >= p["mu_min"], "mu_step", "grid must be non-empty")
    if name in ("mipt-clifford", "mipt-haar"):
        need(all(0 <= x <= 1 for x in p["p"]), "p", "probabilities must lie in [0, 1]")
    if name == "mipt-clifford":
        need(all(L >= 4 and L % 2 == 0 for L in p["L"]), "L", "sizes must be even and >= 4")
    if name == "mipt-haar":
        need(p["N"] >= 2, "N", "need at least two qubits")
    if name == "vqe-tfim":
        need(p["grad_mode"] in ("parameter_shift", "finite_diff"), "grad_mode",
             "must be parameter_shift or finite_diff")
        need(p["n"] >= 2, "n", "need at least two sites")
        need(p["init"] in ("random", "ramp"), "init", "must be random or ramp")
    if name == "excited-subspace":
        need(p["n"] % 2 == 0 and p["n"] >= 4, "n", "must be even and >= 4")


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


# -- running ----------------------------------------------------------------------


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one experiment and write its CSV and metadata; returns the metadata."""
    params = resolve_params(cfg.name, cfg.params)
    fn = EXPERIMENTS[cfg.name][0]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rep = fn(params, cfg.seed, cfg.workers)
    wall = time.perf_counter() - t0
    (out / f"{cfg.name}.csv").write_text(_csv_text(rep.header, rep.rows))
    for fname, text in rep.extra_files.items():
        (out / fname).write_text(text)
    meta = {"experiment": cfg.name, "seed": cfg.seed, "workers": cfg.workers, "config": params,
            "metrics": rep.metrics, "wall_time_s": wall,
            "versions": {"artifact": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()}}
    (out / f"{cfg.name}.json").write_text(json.dumps(meta, indent=1, default=float))
    return meta


def emit_summary(report_dir) -> dict:
    """Aggregate every run-metadata file in ``report_dir`` into ``summary.json``."""
    d = Path(report_dir)
    metas = []
    for f in sorted(d.glob("*.json")) if d.is_dir() else []:
        if f.name == "summary.json" or f.name.endswith(".params.json"):
            continue
        m = json.loads(f.read_text())
        if "experiment" in m and "metrics" in m:
            metas.append(m)
    if not metas:
        raise ConfigError(f"{report_dir}: no run metadata found")
    summary: dict = {"runs": [], "timings": {}}
    for m in metas:
        name, met = m["experiment"], m["metrics"]
        summary["runs"].append(name)
        summary["timings"][name] = m["wall_time_s"]
        if name == "vqe-tfim":
            prev = summary.get("best_energy")
            summary["best_energy"] = met["best_energy"] if prev is None else min(prev, met["best_energy"])
        elif name in ("mipt-clifford", "mipt-haar"):
            curves = summary.setdefault("entropy_curves", {}).setdefault(name, {})
            for L, curve in met["mean_entropy"].items():
                curves[L] = curve
        elif name == "kitaev-scan":
            summary["kitaev_argmax_mu"] = met["argmax_mu"]
        else:
            summary[name] = met
    (d / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return summary


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qforge", description="Run a named simulation experiment.")
    ap.add_argument("experiment", help=f"one of: {', '.join(EXPERIMENTS)}, or 'summary'")
    ap.add_argument("target", nargs="?", help="report directory for 'summary'")
    ap.add_argument("--config", help="JSON file with parameters (flat or under 'params')")
    ap.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one parameter")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.experiment == "summary":
            if not args.target:
                raise ConfigError("summary: report directory required")
            print(json.dumps(emit_summary(args.target), indent=1, sort_keys=True))
            return 0
        file_cfg = {}
        if args.config:
            try:
                file_cfg = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"config: {e}") from None
        params = dict(file_cfg.get("params", {k: v for k, v in file_cfg.items()
                                               if k not in ("seed", "workers", "out", "experiment")}))
        params.update(_parse_set(args.set))
        cfg = ExperimentConfig(
            args.experiment, params,
            seed=args.seed if args.seed is not None else int(file_cfg.get("seed", 0)),
            workers=args.workers if args.workers is not None else int(file_cfg.get("workers", 1)),
            out=args.out or file_cfg.get("out", "runs"))
        if cfg.workers < 1:
            raise ConfigError("workers: must be >= 1")
        meta = run_experiment(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericalContractError as e:
        print(f"numerical contract violated: {e}", file=sys.stderr)
        return 3
    print(json.dumps({"experiment": meta["experiment"], "metrics": meta["metrics"],
                      "wall_time_s": round(meta["wall_time_s"], 3)}, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
