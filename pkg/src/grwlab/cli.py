"""Command-line interface: ``grwlab <command> --config FILE [options]``."""
from __future__ import annotations

import argparse
import inspect
import json
import sys
from pathlib import Path

import numpy as np

from .io.config import ConfigError, load_config
from .io.serialize import (csv_text, read_jsonl, record_line, trajectory_record, write_csv, write_json,
                           write_jsonl, write_povm, write_report)
from .parallel import default_jobs

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.section("output").get("dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args, cfg) -> int:
    from .jump import simulate_ensemble

    model = cfg.model()
    psi0 = cfg.initial_state(model)
    ens_spec = cfg.section("ensemble")
    M = int(ens_spec.get("M", 100))
    cks = sorted(ens_spec.get("checkpoints", []))
    s, t = cfg.window
    if cks and (cks[0] <= s or cks[-1] >= t):
        raise ConfigError([("/ensemble/checkpoints", "checkpoints must lie strictly inside the window")])
    ens = simulate_ensemble(model, psi0, (s, t), args.seed, M, tag=int(ens_spec.get("tag", 0)),
                            checkpoint_times=cks, jobs=args.jobs)
    out = _out_dir(args, cfg)
    if args.format == "csv":
        rows = [[int(k), float(tt), int(x), int(i)]
                for k, tt, x, i in zip(ens.owner, ens.times, ens.sites, ens.labels)]
        write_csv(out / "flashes.csv", ["trajectory", "t", "site", "label"], rows)
    else:
        write_jsonl((trajectory_record(ens, k, k) for k in range(M)), out / "trajectories.jsonl")
    print(f"simulated {M} trajectories, {ens.times.size} flashes -> {out}")
    return EXIT_OK


def cmd_lindblad(args, cfg) -> int:
    from .master import evolve_density

    model = cfg.model()
    psi0 = cfg.initial_state(model)
    spec = cfg.section("lindblad")
    s, t_end = cfg.window
    times = sorted(spec.get("times", [t_end]))
    rho = np.outer(psi0, psi0.conj())
    t_prev, rows, mats = s, [], []
    for t in times:
        if t < t_prev:
            raise ConfigError([("/lindblad/times", "times must not precede the window start")])
        if t > t_prev:
            rho = evolve_density(model, rho, (t_prev, t), spec.get("steps"))
        t_prev = t
        pops = np.real(np.diag(rho))
        rows.append([t, float(np.trace(rho).real), float(np.real(np.trace(rho @ rho))),
                     float(np.real(np.trace(model.hamiltonian @ rho)))] + pops.tolist())
        mats.append(rho)
    out = _out_dir(args, cfg)
    cols = ["time", "trace", "purity", "energy"] + [f"p{k}" for k in range(model.dim)]
    if args.format == "csv":
        write_csv(out / "lindblad.csv", cols, rows)
    else:
        write_json({"format_version": "1.0", "kind": "density_evolution", "times": times,
                    "density_matrices": np.array(mats)}, out / "lindblad.json")
    print(f"evolved density matrix to {len(times)} times -> {out}")
    return EXIT_OK


def cmd_povm(args, cfg) -> int:
    from .formalism import (consistency_error, flow_law, grw_law_exact, grw_povm_mc, quantum_povm,
                            quantum_superops, random_runtime_exact)
    from .linalg import op_norm

    exp = cfg.experiment()
    spec = cfg.section("povm")
    routes = spec.get("routes", ["quantum", "flow"])
    tol = cfg.section("tolerances")
    results, summary, ok = {}, [], True
    for route in routes:
        maps, rem, extra = None, 0.0, {}
        if exp.stopping is not None and route in ("quantum", "exact"):
            summary.append({"route": route, "skipped": "not available for random run-time experiments"})
            continue
        if route == "quantum":
            povm, maps = quantum_povm(exp), quantum_superops(exp)
        elif route == "exact":
            law = grw_law_exact(exp, int(spec.get("n_max", 3)), int(spec.get("nodes", 8)))
            povm, maps, rem = law.povm, law.superops, law.remainder
        elif route == "flow":
            povm, maps = random_runtime_exact(exp) if exp.stopping is not None else flow_law(exp)
            rem = povm.meta.get("remainder_bound", 0.0)
        else:
            res = grw_povm_mc(exp, int(spec.get("M", 10_000)), args.seed, jobs=args.jobs)
            povm = res.povm
            extra = {"condition_number": res.condition_number, "max_se": float(max(res.se_re.max(), res.se_im.max()))}
        results[route] = povm
        write_povm(povm, _out_dir(args, cfg) / f"povm_{route}.json")
        row = {"route": route, "completeness_error": povm.completeness_error(),
               "min_eigenvalue": povm.min_eigenvalue(), "remainder_bound": rem, **extra}
        if maps is not None:
            row["consistency_error"] = consistency_error(povm, maps)
            ok &= row["consistency_error"] <= tol.get("consistency", 1e-8)
        if route != "mc":
            ok &= row["completeness_error"] <= tol.get("completeness", 1e-3) + rem
            ok &= row["min_eigenvalue"] >= -tol.get("psd", 1e-8)
        summary.append(row)
    names = list(results)
    for a in names:
        for b in names:
            if a < b:
                d = max(op_norm(results[a][z] - results[b][z]) for z in results[a].outcomes)
                summary.append({"compare": [a, b], "max_op_norm_distance": d})
    out = _out_dir(args, cfg)
    write_report({"kind": "povm_summary", "passed": bool(ok), "rows": summary}, out / "povm_summary.json")
    print(json.dumps({"passed": bool(ok), "routes": names}))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args, cfg) -> int:
    from . import verify as V

    spec = cfg.require("verify")
    M = int(spec.get("M", 20_000))
    reports = []
    for name in spec["suites"]:
        kw = {"jobs": args.jobs} if "jobs" in inspect.signature(V.SUITES[name]).parameters else {}
        if name == "marginal":
            if "model" in cfg.doc:
                model = cfg.model()
                kw["model"] = model
                kw["sp"] = cfg.split(model)
                if "initial_state" in cfg.doc:
                    kw["psi0"] = cfg.initial_state(model)
            for k in ("t", "interaction"):
                if k in spec:
                    kw[k] = spec[k]
        try:
            reports.append(V.SUITES[name](M, args.seed, **kw))
        except V.VerifyError as exc:
            raise ConfigError([("/verify", f"suite {name}: {exc}")]) from None
    out = _out_dir(args, cfg)
    doc = {"kind": "verify", "seed": args.seed, "passed": all(r.passed for r in reports),
           "suites": [r.to_dict() for r in reports]}
    write_report(doc, out / "verify_report.json")
    rows = [[r.suite] + row for r in reports for row in r.rows()]
    text = csv_text(["suite"] + V.summary_columns(), rows)
    (out / "verify_summary.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK if doc["passed"] else EXIT_FAIL


def cmd_scenario(args, cfg) -> int:
    from .experiments import SCENARIOS, ScenarioError

    spec = cfg.require("scenario")
    fn = SCENARIOS[spec["name"]]
    params = dict(spec.get("params", {}))
    sig = inspect.signature(fn).parameters
    bad = [k for k in params if k not in sig]
    if bad:
        raise ConfigError([(f"/scenario/params/{k}", "unknown parameter") for k in bad])
    if "seed" in sig:
        params["seed"] = args.seed
    if "jobs" in sig:
        params["jobs"] = args.jobs
    try:
        res = fn(**params)
    except ScenarioError as exc:
        print(f"scenario aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = _out_dir(args, cfg)
    write_report(res, out / f"scenario_{res.scenario}.json")
    for name, curve in res.curves.items():
        write_csv(out / f"{res.scenario}_{name}.csv", curve["columns"], curve["rows"])
    print(json.dumps({"scenario": res.scenario, "ok": res.ok, "passed": res.passed}))
    return EXIT_OK if res.ok else EXIT_FAIL


def replay_records(cfg, records: list[dict], jobs: int | None = None) -> list[dict]:
    """Re-simulate every record from the configuration and the record's seed and stream."""
    from .jump import Ensemble
    from .parallel import parallel_map

    model = cfg.model()
    psi0 = cfg.initial_state(model)
    groups: dict = {}
    for pos, r in enumerate(records):
        key = (int(r["seed"]), tuple(r["window"]), tuple(c["t"] for c in r["checkpoints"]))
        groups.setdefault(key, []).append(pos)
    out: list = [None] * len(records)
    for (seed, window, cks), idx in groups.items():
        streams = np.array([records[p]["stream"] for p in idx], dtype=np.uint64)
        chunks = np.array_split(np.arange(len(idx)), max(1, min(len(idx), jobs or default_jobs())))
        parts = parallel_map(_ReplayChunk(model, psi0, window, seed, cks), [streams[c] for c in chunks if c.size],
                             jobs)
        ens = Ensemble.concat(parts)
        for k, p in enumerate(idx):
            out[p] = trajectory_record(ens, k, records[p]["id"])
    return out


class _ReplayChunk:
    def __init__(self, model, psi0, window, seed, cks):
        self.args = (model, psi0, window, seed, cks)

    def __call__(self, streams):
        from .jump import simulate_batch

        model, psi0, window, seed, cks = self.args
        return simulate_batch(model, psi0, window, seed, streams, cks)


def cmd_replay(args, cfg) -> int:
    if not args.record:
        raise ConfigError([("--record", "replay needs a trajectory record file")])
    try:
        lines = Path(args.record).read_text(encoding="utf-8").splitlines(keepends=True)
        records = read_jsonl(args.record)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([("--record", str(exc))]) from None
    new = replay_records(cfg, records, args.jobs)
    new_lines = [record_line(r) for r in new]
    old_lines = [ln for ln in lines if ln.strip()]
    diffs = [k for k, (a, b) in enumerate(zip(old_lines, new_lines)) if a != b]
    out = _out_dir(args, cfg)
    write_jsonl(new, out / "replay.jsonl")
    identical = not diffs and len(old_lines) == len(new_lines)
    print(json.dumps({"records": len(new), "identical": identical, "mismatched_ids": [new[k]["id"] for k in diffs]}))
    return EXIT_OK if identical else EXIT_FAIL


COMMANDS = {
    "simulate": cmd_simulate,
    "lindblad": cmd_lindblad,
    "povm": cmd_povm,
    "verify": cmd_verify,
    "scenario": cmd_scenario,
    "replay": cmd_replay,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="grwlab", description="GRW collapse-theory laboratory on small lattices.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--seed", type=int, default=None, help="override the master seed (u64)")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: GRW_LAB_JOBS or 1)")
        sp.add_argument("--format", choices=["json", "csv"], default="json")
        if name == "replay":
            sp.add_argument("--record", help="JSONL trajectory records to reproduce")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = cfg.seed
        elif not 0 <= args.seed < 2**64:
            raise ConfigError([("--seed", "seed must be an unsigned 64-bit integer")])
        if args.jobs is None:
            args.jobs = default_jobs()
        elif args.jobs < 1:
            raise ConfigError([("--jobs", "jobs must be positive")])
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
