"""Single-run and sweep drivers.

A run executes `repetitions` independent replicas of the federated attack
simulation, each seeded by hash(master_seed, rep).  Replicas are pure
functions of the config plus the rep index, so they may execute serially or
in a process pool with byte-identical output either way.
"""

import json
import time
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ..backdoor import (build_poison_plan, gen_universal_trigger,
                        optimize_adaptive_trigger)
from ..backdoor import plan_to_json as poison_plan_to_json
from ..errors import InvalidValue
from ..federation import (RoundContext, ServerState, build_eval_suite,
                          local_train, prepare_client, run_round)
from ..metrics import CSV_HEADER, csv_row, evaluate_round
from ..nn import OptimizerSpec, init_params, save_checkpoint
from ..partition import (apply_overlap, split_iid, split_label_skew,
                         split_louvain, split_quantity_skew)
from ..partition import plan_to_json as partition_plan_to_json
from ..rng import derive_seed
from .config import (ExperimentConfig, FACTORS, config_fingerprint,
                     config_to_json, resolve_config)
from .datasets import load_dataset
from .plotting import line_plot
from .synth import synth_dataset


def load_config_dataset(cfg: ExperimentConfig):
    """Returns a Graph (node task) or GraphSet (graph task)."""
    if cfg.dataset_path is not None:
        fmt = cfg.dataset_format
        if fmt == "auto":
            path = Path(cfg.dataset_path)
            if path.suffix == ".json":
                fmt = "json"
            else:
                fmt = "citation" if cfg.task == "node" else "tu"
        return load_dataset(cfg.task, cfg.dataset_path, fmt)
    return synth_dataset(cfg.dataset_name, cfg.task,
                         feature_dim=cfg.feature_dim)


def dataset_info(data, task: str) -> dict:
    if task == "node":
        labels = np.asarray(data.labels)
        return {"classes": int(labels.max()) + 1,
                "feature_dim": data.feature_dim,
                "avg_nodes": float(data.num_nodes),
                "samples": data.num_nodes}
    sizes = [g.num_nodes for g in data.graphs]
    return {"classes": data.class_count, "feature_dim": data.feature_dim,
            "avg_nodes": float(np.mean(sizes)), "samples": len(data.graphs)}


def trigger_node_count(cfg: ExperimentConfig, avg_nodes: float) -> int:
    if cfg.task == "node":
        return cfg.trigger_size
    return max(2, int(round(cfg.trigger_size_fraction * avg_nodes)))


def _partition(cfg: ExperimentConfig, data, rep_seed: int):
    if cfg.task == "node":
        if cfg.distribution == "iid":
            plan = split_iid(data, cfg.clients, "node", rep_seed,
                             cfg.train_fraction)
        else:
            plan = split_louvain(data, cfg.clients, rep_seed,
                                 cfg.train_fraction)
        if cfg.alpha > 0:
            plan = apply_overlap(plan, cfg.alpha, rep_seed)
        return plan
    if cfg.distribution == "iid":
        return split_iid(data.graphs, cfg.clients, "graph", rep_seed,
                         cfg.train_fraction)
    if cfg.distribution == "label_skew":
        return split_label_skew(data.graphs, cfg.clients, cfg.label_skew_p,
                                rep_seed, cfg.train_fraction)
    return split_quantity_skew(data.graphs, cfg.clients, rep_seed,
                               cfg.quantity_skew_concentration,
                               cfg.train_fraction)


def _clamped_trigger_params(cfg: ExperimentConfig, n: int):
    """Feasible generator knobs for an n-node trigger.

    Tiny triggers (graph-task fractions on small hosts) can make the
    configured ws/ba/rr knobs structurally impossible; they are clamped to
    the nearest feasible value rather than aborting the run.
    """
    kind, notes = cfg.trigger_kind, []
    if kind == "renyi":
        return "renyi", {"p": cfg.renyi_p}, notes
    if kind == "ws":
        k = min(cfg.ws_k, (n - 1) // 2 * 2)
        if k >= 2:
            if k != cfg.ws_k:
                notes.append(f"ws_k clamped to {k} for a {n}-node trigger")
            return "ws", {"k": k, "beta": cfg.ws_beta}, notes
        notes.append(f"{n}-node trigger cannot host a ws ring; "
                     "substituting a complete trigger")
        return "renyi", {"p": 1.0}, notes
    if kind == "ba":
        m = min(cfg.ba_m, n - 1)
        if m != cfg.ba_m:
            notes.append(f"ba_m clamped to {m} for a {n}-node trigger")
        return "ba", {"m": m}, notes
    d = min(cfg.rr_d, n - 1)
    while d >= 1 and (d * n) % 2:
        d -= 1
    if d >= 1:
        if d != cfg.rr_d:
            notes.append(f"rr_d clamped to {d} for a {n}-node trigger")
        return "rr", {"d": d}, notes
    notes.append(f"{n}-node trigger admits no regular degree; "
                 "substituting a complete trigger")
    return "renyi", {"p": 1.0}, notes


def _train_surrogate(cfg: ExperimentConfig, shard, info: dict, seed):
    template = init_params(cfg.model, info["feature_dim"], cfg.hidden_dim,
                           cfg.num_layers, info["classes"], seed)
    client = prepare_client(shard.client_id, shard, cfg.task, template,
                            plan=None, readout=cfg.readout)
    spec = OptimizerSpec(algo=cfg.optimizer, lr=cfg.lr,
                         weight_decay=cfg.weight_decay)
    params, _ = local_train(client, template, False, cfg.surrogate_epochs,
                            spec)
    return params


def _build_triggers(cfg, shards, info, rep_seed, notes):
    triggers = {}
    for i in range(cfg.malicious):
        t_seed = derive_seed(rep_seed, "trigger", i)
        if cfg.trigger_kind == "adaptive":
            surrogate = _train_surrogate(cfg, shards[i], info,
                                         derive_seed(t_seed, "surrogate"))
            trig = optimize_adaptive_trigger(
                surrogate, shards[i], trigger_node_count(cfg,
                                                         info["avg_nodes"]),
                cfg.tau, cfg.adaptive_steps, cfg.adaptive_lr, t_seed)
            if trig.warning:
                notes.append(f"client {i}: {trig.warning}")
        else:
            kind, params, clamp_notes = _clamped_trigger_params(
                cfg, trigger_node_count(cfg, info["avg_nodes"]))
            notes.extend(clamp_notes)
            trig = gen_universal_trigger(
                kind, trigger_node_count(cfg, info["avg_nodes"]), params,
                info["feature_dim"], t_seed, target_label=cfg.tau,
                feature_value=cfg.trigger_feature_value)
        triggers[i] = trig
    return triggers


def _recount(detail: dict, tau: int, malicious: List[int]) -> dict:
    """Metrics recomputed from raw prediction dumps, for oracle checks."""
    accs, hit_attack, hit_transfer = [], [], []
    for cid in sorted(detail):
        entry = detail[cid]
        preds = np.asarray(entry["clean_pred"])
        labels = np.asarray(entry["clean_labels"])
        accs.append(float(np.mean(preds == labels)))
        if "attack_pred" in entry:
            hit_attack.append(
                float(np.mean(np.asarray(entry["attack_pred"]) == tau)))
        if "transfer_pred" in entry:
            hit_transfer.append(
                float(np.mean(np.asarray(entry["transfer_pred"]) == tau)))
    return {"acc": float(np.mean(accs)),
            "asr": float(np.mean(hit_attack)) if hit_attack else None,
            "tasr": float(np.mean(hit_transfer)) if hit_transfer else None}


def _close(a: Optional[float], b: Optional[float]) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= 1e-12


def run_rep(cfg: ExperimentConfig, rep: int,
            checkpoint_dir: Optional[str] = None) -> dict:
    """One seeded replica: partition, poison, T rounds, final recount."""
    rep_seed = derive_seed(cfg.master_seed, "rep", rep)
    started = time.perf_counter()
    out = {"rep": rep, "seed": rep_seed, "rows": [], "error": None}
    notes: List[str] = []
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            data = load_config_dataset(cfg)
            info = dataset_info(data, cfg.task)
            if cfg.tau >= info["classes"]:
                raise InvalidValue(
                    f"tau={cfg.tau} outside {info['classes']} classes")
            plan = _partition(cfg, data, rep_seed)
            shards = plan.shards
            if plan.warning:
                notes.append(plan.warning)
            triggers = _build_triggers(cfg, shards, info, rep_seed, notes)
            plans = {}
            for i in range(cfg.malicious):
                plans[i] = build_poison_plan(
                    shards[i], cfg.rho, triggers[i], cfg.trigger_position,
                    derive_seed(rep_seed, "plan", i),
                    cfg.asr_exclude_target_label, client_id=i)
            transfer_plans = {}
            for j in range(cfg.malicious, cfg.clients):
                transfer_plans[j] = build_poison_plan(
                    shards[j], cfg.rho, triggers[0], cfg.trigger_position,
                    derive_seed(rep_seed, "transfer", j),
                    cfg.asr_exclude_target_label, client_id=j)
            for p in list(plans.values()) + list(transfer_plans.values()):
                if p.warning:
                    notes.append(f"client {p.client_id}: {p.warning}")

            fingerprint = config_fingerprint(cfg)
            template = init_params(cfg.model, info["feature_dim"],
                                   cfg.hidden_dim, cfg.num_layers,
                                   info["classes"],
                                   derive_seed(rep_seed, "init"))
            clients = [prepare_client(i, shards[i], cfg.task, template,
                                      plans.get(i), cfg.readout)
                       for i in range(cfg.clients)]
            suite = build_eval_suite(shards, cfg.task, plans, transfer_plans,
                                     cfg.tau, cfg.readout)
            ctx = RoundContext(task=cfg.task,
                               optimizer=OptimizerSpec(
                                   algo=cfg.optimizer, lr=cfg.lr,
                                   weight_decay=cfg.weight_decay),
                               local_epochs=cfg.local_epochs,
                               t_star_fraction=cfg.t_star_fraction,
                               total_rounds=cfg.rounds,
                               eval_suite=suite, fingerprint=fingerprint)
            server = ServerState(global_params=template)
            for _ in range(cfg.rounds):
                server = run_round(server, clients, ctx)
                if (checkpoint_dir and cfg.checkpoint_interval
                        and server.round % cfg.checkpoint_interval == 0):
                    save_checkpoint(server.global_params,
                                    Path(checkpoint_dir) /
                                    f"rep{rep}-round{server.round}.npz")
            final = server.history[-1]
            _, detail = evaluate_round(server.global_params, suite,
                                       cfg.rounds - 1, fingerprint,
                                       with_detail=True)
        notes.extend(str(w.message) for w in caught)
        recount = _recount(detail, cfg.tau, sorted(plans))
        out.update(
            rows=[csv_row(rec, rep_seed) for rec in server.history],
            final={"acc": final.acc, "asr": final.asr, "tasr": final.tasr},
            per_client_acc=final.per_client_acc,
            recount=recount,
            recount_ok=(_close(recount["acc"], final.acc)
                        and _close(recount["asr"], final.asr)
                        and _close(recount["tasr"], final.tasr)),
            detail=detail,
            audit={"partition": partition_plan_to_json(plan),
                   "plans": {i: poison_plan_to_json(p)
                             for i, p in plans.items()},
                   "transfer_plans": {j: poison_plan_to_json(p)
                                      for j, p in transfer_plans.items()},
                   "trigger_nodes": trigger_node_count(cfg,
                                                       info["avg_nodes"])},
            warnings=sorted(set(notes)))
    except Exception:
        out["error"] = traceback.format_exc()
    out["elapsed_s"] = time.perf_counter() - started
    return out


def _rep_worker(args):
    return run_rep(*args)


def _aggregate(finals: List[dict], key: str) -> Optional[dict]:
    vals = [f[key] for f in finals if f.get(key) is not None]
    if not vals:
        return None
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return {"mean": float(np.mean(vals)), "std": std, "values": vals}


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Run all repetitions, write results.csv/results.json/summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint_dir = None
    if cfg.checkpoint_interval:
        checkpoint_dir = out / "checkpoints"
        checkpoint_dir.mkdir(exist_ok=True)
        checkpoint_dir = str(checkpoint_dir)
    jobs = [(cfg, rep, checkpoint_dir) for rep in range(cfg.repetitions)]
    if cfg.workers > 1 and cfg.repetitions > 1:
        with ProcessPoolExecutor(
                max_workers=min(cfg.workers, cfg.repetitions)) as pool:
            results = list(pool.map(_rep_worker, jobs))
    else:
        results = [run_rep(*job) for job in jobs]

    lines = [CSV_HEADER]
    for res in results:
        lines.extend(res["rows"])
    (out / "results.csv").write_text("\n".join(lines) + "\n")

    fingerprint = config_fingerprint(cfg)
    (out / "results.json").write_text(json.dumps(
        {"config": config_to_json(cfg), "fingerprint": fingerprint,
         "repetitions": [{k: v for k, v in res.items() if k != "rows"}
                         for res in results]},
        sort_keys=True, default=str))

    finals = [res["final"] for res in results if not res["error"]]
    summary = {
        "fingerprint": fingerprint,
        "config": config_to_json(cfg),
        "final_acc": _aggregate(finals, "acc"),
        "final_asr": _aggregate(finals, "asr"),
        "final_tasr": _aggregate(finals, "tasr"),
        "per_rep": [{"rep": res["rep"], "seed": res["seed"],
                     "elapsed_s": res["elapsed_s"],
                     "error": res["error"],
                     **(res["final"] if not res["error"] else {})}
                    for res in results],
        "failed_reps": [res["rep"] for res in results if res["error"]],
        "recount_ok": all(res.get("recount_ok", False)
                          for res in results if not res["error"]),
        "warnings": sorted({w for res in results
                            for w in res.get("warnings", [])}),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2,
                                                 sort_keys=True))
    return summary


def sweep(cfg: ExperimentConfig, factor_name: str, values, out_root) -> dict:
    """One run_experiment per value plus sweep.csv and per-metric plots."""
    if factor_name not in FACTORS:
        raise InvalidValue(f"unknown factor {factor_name!r}; "
                           f"choose from {sorted(FACTORS)}")
    factor = FACTORS[factor_name]
    key = factor.key_for(cfg.task)
    grid = factor.grids[cfg.task]
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)

    lines = ["value,acc_mean,acc_std,asr_mean,asr_std,tasr_mean,tasr_std"]
    points = []
    for value in values:
        if value not in grid:
            warnings.warn(f"{factor_name} value {value!r} is off the "
                          f"studied grid {grid}")
        sub = resolve_config({**config_to_json(cfg), key: value})
        summary = run_experiment(sub, out_root / f"{factor_name}={value}")
        points.append((value, summary))
        cells = [str(value)]
        for metric in ("final_acc", "final_asr", "final_tasr"):
            agg = summary[metric]
            cells.extend(["", ""] if agg is None
                         else [repr(agg["mean"]), repr(agg["std"])])
        lines.append(",".join(cells))
    (out_root / "sweep.csv").write_text("\n".join(lines) + "\n")

    xs = [v for v, _ in points]
    for metric, label in (("final_acc", "acc"), ("final_asr", "asr"),
                          ("final_tasr", "tasr")):
        ys = [s[metric]["mean"] if s[metric] else np.nan for _, s in points]
        line_plot(xs, {label: ys}, factor_name, label,
                  out_root / f"{label}.svg")
    return {"factor": factor_name, "key": key,
            "points": [(v, s["final_acc"], s["final_asr"], s["final_tasr"])
                       for v, s in points]}
