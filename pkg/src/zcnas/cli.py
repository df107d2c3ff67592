"""Command-line pipeline driver.

Verbs mirror the four pipeline stages plus two utilities:

    zcnas sample     --config cfg.json        draw architectures into the ledger
    zcnas score      --config cfg.json        compute every proxy for every spec
    zcnas train      --config cfg.json --all | --top-k K --proxy P | --hashes h1,h2
    zcnas evaluate   --config cfg.json        metrics report over the results table
    zcnas noise-eval --config cfg.json        proxy correlations under test noise
    zcnas synth      --config cfg.json        write the synthetic dataset as CSVs

Stages enforce their ordering (score needs sampled specs, train needs
scoring complete, and so on) and every verb is idempotent: re-running a
finished stage appends nothing and rewrites identical CSV artifacts.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .arch import ArchSpec, derive_seed, deserialize, instantiate, sample_architectures, serialize
from .config import ConfigError, ExperimentConfig, load_config
from .data import (WindowedDataset, build_datasets, generate_synthetic, load_manifest,
                   manifest_class_names, write_manifest, write_recording_csv)
from .evaluate import ResultsTable, build_report, noise_robustness
from .proxies import (COMPONENT_PROXIES, ScoreBatch, compute_proxies, ensemble,
                      make_score_batch)
from .store import ResultsStore, StoreError, proxy_value_from_payload
from .train import RunRecord, TrainConfig, train


class StageError(RuntimeError):
    """A pipeline stage was invoked before its prerequisites completed."""


# ---------------------------------------------------------------- helpers

def _log(cfg_verbose: bool, msg: str) -> None:
    if cfg_verbose:
        print(msg)


def _recordings(cfg: ExperimentConfig):
    if cfg.dataset.manifest is not None:
        manifest = cfg.manifest_path()
        return load_manifest(manifest), manifest_class_names(manifest)
    s = cfg.dataset.synthetic
    recs = generate_synthetic(int(s["k_classes"]), int(s["n_users"]),
                              float(s["duration_s"]),
                              derive_seed(cfg.seeds["data"], "synth"),
                              jitter=float(s.get("jitter", 0.05)))
    names = [f"class{i}" for i in range(int(s["k_classes"]))]
    return recs, names


def _datasets(cfg: ExperimentConfig) -> dict[str, WindowedDataset]:
    recordings, class_names = _recordings(cfg)
    datasets, _ = build_datasets(recordings, derive_seed(cfg.seeds["data"], "split"),
                                 class_names)
    k = cfg.search_space.num_classes
    for split, ds in datasets.items():
        if ds.labels.max() >= k:
            raise ConfigError(f"{split} split has label {int(ds.labels.max())} but "
                              f"search_space.num_classes is {k}")
    return datasets


def _store(cfg: ExperimentConfig) -> ResultsStore:
    return ResultsStore(cfg.experiment_dir, cfg.experiment_id)


def _sampled_specs(store: ResultsStore) -> dict[str, ArchSpec]:
    recs = store.records("spec", require_exists=True)
    if not recs:
        raise StageError("no sampled architectures in the ledger; run 'sample' first")
    return {r.payload["spec_hash"]: deserialize(r.payload["record"]) for r in recs}


def _score_rows(store: ResultsStore) -> dict[str, dict[str, float]]:
    """spec_hash -> proxy -> value (degenerate rows as -inf)."""
    out: dict[str, dict[str, float]] = {}
    for rec in store.records("proxy_score"):
        out.setdefault(rec.payload["spec_hash"], {})[rec.payload["proxy"]] = \
            proxy_value_from_payload(rec.payload)
    return out


def _require_scoring_complete(store: ResultsStore, cfg: ExperimentConfig,
                              hashes: list[str]) -> None:
    plan = store.resume_plan(hashes, cfg.proxies)
    if plan["to_score"]:
        raise StageError(f"scoring incomplete for {len(plan['to_score'])} "
                         "architectures; run 'score' first")


def _table_proxies(cfg: ExperimentConfig, scores: dict[str, dict[str, float]]) -> tuple[str, ...]:
    proxies = cfg.proxies
    if set(COMPONENT_PROXIES) <= set(proxies) and \
            all("ensemble" in row for row in scores.values()):
        proxies = proxies + ("ensemble",)
    return proxies


def _assemble_table(store: ResultsStore, cfg: ExperimentConfig) -> ResultsTable:
    runs = [RunRecord.from_dict(r.payload) for r in store.records("run_record")]
    if not runs:
        raise StageError("no trained runs in the ledger; run 'train' first")
    scores = _score_rows(store)
    return ResultsTable.from_records(runs, scores, _table_proxies(cfg, scores))


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(v: float) -> str:
    return repr(float(v))


def _jsonsafe(v: float):
    return float(v) if math.isfinite(v) else None


def _write_scores_csv(store: ResultsStore, cfg: ExperimentConfig) -> Path:
    rows = []
    for rec in store.records("proxy_score"):
        p = rec.payload
        value = proxy_value_from_payload(p)
        rows.append([p["spec_hash"], p["proxy"], _fmt(value),
                     "1" if p["degenerate"] else "0"])
    rows.sort(key=lambda r: (r[0], r[1]))
    path = cfg.experiment_dir / "scores.csv"
    _write_csv(path, ["spec_hash", "proxy", "value", "degenerate_flag"], rows)
    return path


def _write_runs_csv(store: ResultsStore, cfg: ExperimentConfig) -> Path:
    rows = []
    for rec in store.records("run_record"):
        r = RunRecord.from_dict(rec.payload)
        rows.append([r.spec_hash, str(r.seed), _fmt(r.best_val_f1),
                     _fmt(r.test_f1_at_best_val), str(r.epochs_completed),
                     _fmt(r.wall_time_s), "1" if r.diverged else "0"])
    rows.sort(key=lambda row: row[0])
    path = cfg.experiment_dir / "runs.csv"
    _write_csv(path, ["spec_hash", "seed", "best_val_f1", "test_f1_at_best_val",
                      "epochs_completed", "wall_time_s", "diverged"], rows)
    return path


# ---------------------------------------------------------------- workers

def _score_worker(task):
    rec_json, init_seed, bx, by, vw, vl, vu, proxies = task
    spec = deserialize(rec_json)
    batch = ScoreBatch(bx, by)
    val = WindowedDataset(vw, vl, vu, "val")
    result = compute_proxies(spec, init_seed, batch, val, proxies)
    return spec.spec_hash, {p: (s.value, s.degenerate) for p, s in result.items()}


def _train_worker(task):
    rec_json, init_seed, train_seed, blobs, train_kwargs = task
    spec = deserialize(rec_json)
    datasets = {split: WindowedDataset(w, l, u, split)
                for split, (w, l, u) in blobs.items()}
    model = instantiate(spec, spec.num_classes, init_seed)
    tc = TrainConfig(seed=train_seed, **train_kwargs)
    record = train(model, datasets, tc, spec_hash=spec.spec_hash)
    return spec.spec_hash, record.to_dict(), model.params.state()


def _run_tasks(worker, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks, chunksize=1))


# ---------------------------------------------------------------- commands

def cmd_sample(cfg: ExperimentConfig, args) -> int:
    specs = sample_architectures(cfg.search_space, cfg.seeds["sampler"])
    store = _store(cfg)
    added = 0
    for spec in specs:
        added += store.append_if_new("spec", {"spec_hash": spec.spec_hash,
                                              "record": serialize(spec)})
    distinct = len({s.spec_hash for s in specs})
    print(f"sample: drew {len(specs)} specs ({distinct} distinct), "
          f"{added} new in {store.ledger_path}")
    return 0


def cmd_score(cfg: ExperimentConfig, args) -> int:
    store = _store(cfg)
    specs = _sampled_specs(store)
    hashes = sorted(specs)
    plan = store.resume_plan(hashes, cfg.proxies)
    added = 0
    if plan["to_score"]:
        datasets = _datasets(cfg)
        batch = make_score_batch(datasets["train"], cfg.seeds["score_batch"],
                                 cfg.score_batch_size)
        val = datasets["val"]
        tasks = [(serialize(specs[h]), derive_seed(cfg.seeds["init"], "init", h),
                  batch.inputs, batch.labels, val.windows, val.labels,
                  list(val.user_ids), cfg.proxies)
                 for h in plan["to_score"]]
        _log(args.verbose, f"score: computing {len(cfg.proxies)} proxies for "
                           f"{len(tasks)} architectures (jobs={cfg.jobs})")
        for spec_hash, results in _run_tasks(_score_worker, tasks, cfg.jobs):
            for proxy, (value, degenerate) in results.items():
                added += store.append_if_new("proxy_score", {
                    "spec_hash": spec_hash, "proxy": proxy,
                    "value": None if degenerate else value,
                    "degenerate": degenerate})
            _log(args.verbose, f"score: {spec_hash[:12]} done")

    # ensemble over the completed component table
    if set(COMPONENT_PROXIES) <= set(cfg.proxies):
        from .proxies import ProxyScore
        rows = _score_rows(store)
        table = {p: [ProxyScore(p, rows[h][p],
                                degenerate=not math.isfinite(rows[h][p]))
                     for h in hashes] for p in COMPONENT_PROXIES}
        for h, score in zip(hashes, ensemble(table)):
            added += store.append_if_new("proxy_score", {
                "spec_hash": h, "proxy": "ensemble",
                "value": score.value, "degenerate": False})

    path = _write_scores_csv(store, cfg)
    print(f"score: {added} new score records; table at {path}")
    return 0


def cmd_train(cfg: ExperimentConfig, args) -> int:
    store = _store(cfg)
    specs = _sampled_specs(store)
    hashes = sorted(specs)
    _require_scoring_complete(store, cfg, hashes)

    if args.all:
        selected = hashes
    elif args.top_k is not None:
        if args.proxy is None:
            raise StageError("--top-k requires --proxy")
        scores = _score_rows(store)
        if any(args.proxy not in scores.get(h, {}) for h in hashes):
            raise StageError(f"no complete score column for proxy {args.proxy!r}")
        if not 1 <= args.top_k <= len(hashes):
            raise StageError(f"--top-k must lie in [1, {len(hashes)}]")
        ranked = sorted(hashes, key=lambda h: (-scores[h][args.proxy], h))
        selected = sorted(ranked[:args.top_k])
    elif args.hashes:
        selected = sorted(set(args.hashes.split(",")))
        unknown = [h for h in selected if h not in specs]
        if unknown:
            raise StageError(f"unknown spec hashes: {', '.join(unknown)}")
    else:
        raise StageError("train needs a subset: --all, --top-k K --proxy P, or --hashes")

    plan = store.resume_plan(selected, cfg.proxies)
    pending = plan["to_train"]
    added = 0
    if pending:
        datasets = _datasets(cfg)
        blobs = {split: (ds.windows, ds.labels, list(ds.user_ids))
                 for split, ds in datasets.items()}
        train_kwargs = {f.name: getattr(cfg.train, f.name)
                        for f in dataclasses.fields(cfg.train) if f.name != "seed"}
        tasks = [(serialize(specs[h]), derive_seed(cfg.seeds["init"], "init", h),
                  derive_seed(cfg.seeds["train"], "train", h), blobs, train_kwargs)
                 for h in pending]
        _log(args.verbose, f"train: {len(tasks)} architectures for "
                           f"{cfg.train.epochs} epochs (jobs={cfg.jobs})")
        ckpt_dir = cfg.experiment_dir / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        scores = _score_rows(store)
        for spec_hash, run_dict, state in _run_tasks(_train_worker, tasks, cfg.jobs):
            np.savez(ckpt_dir / f"{spec_hash}.npz", **state)
            run_dict["proxy_scores"] = {p: _jsonsafe(v)
                                        for p, v in scores.get(spec_hash, {}).items()}
            added += store.append_if_new("run_record", run_dict)
            _log(args.verbose, f"train: {spec_hash[:12]} "
                               f"val={run_dict['best_val_f1']:.4f} "
                               f"test={run_dict['test_f1_at_best_val']:.4f}"
                 + (" DIVERGED" if run_dict["diverged"] else ""))

    path = _write_runs_csv(store, cfg)
    print(f"train: {len(selected)} selected, {added} newly trained; table at {path}")
    return 0


def cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    store = _store(cfg)
    specs = _sampled_specs(store)
    _require_scoring_complete(store, cfg, sorted(specs))
    table = _assemble_table(store, cfg)
    report = build_report(table, trials=cfg.random_search_trials,
                          rng_seed=cfg.seeds["eval"])
    rows = report.rows()
    path = cfg.experiment_dir / "report.csv"
    _write_csv(path, ["proxy", "metric", "value"],
               [[p, m, _fmt(v)] for p, m, v in rows])
    text_path = cfg.experiment_dir / "report.txt"
    text_path.write_text(report.summary_text())
    store.append_if_new("report", {
        "name": "eval_report",
        "rows": [[p, m, _jsonsafe(v)] for p, m, v in rows]})
    print(f"evaluate: {len(table)} architectures, "
          f"best test F1 {report.best_test_f1:.4f}; report at {path}")
    return 0


def cmd_noise_eval(cfg: ExperimentConfig, args) -> int:
    store = _store(cfg)
    if not store.has("report", {"name": "eval_report"}):
        raise StageError("no evaluation report in the ledger; run 'evaluate' first")
    specs = _sampled_specs(store)
    table = _assemble_table(store, cfg)
    datasets = _datasets(cfg)
    ckpt_dir = cfg.experiment_dir / "checkpoints"
    models = {}
    for h in table.spec_hashes:
        path = ckpt_dir / f"{h}.npz"
        if not path.exists():
            raise StageError(f"missing checkpoint for {h}: {path}")
        model = instantiate(specs[h], specs[h].num_classes,
                            derive_seed(cfg.seeds["init"], "init", h))
        with np.load(path) as npz:
            model.params.load_state({k: npz[k] for k in npz.files})
        models[h] = model
    _log(args.verbose, f"noise-eval: {len(models)} checkpoints x "
                       f"{len(cfg.noise_variances)} variance levels")
    results = noise_robustness(table, models, datasets["test"],
                               variances=cfg.noise_variances,
                               rng_seed=cfg.seeds["noise"])
    rows = []
    for variance in sorted(results):
        for proxy in sorted(results[variance]):
            rows.append([_fmt(variance), proxy, _fmt(results[variance][proxy])])
    path = cfg.experiment_dir / "noise_report.csv"
    _write_csv(path, ["variance", "proxy", "spearman"], rows)
    store.append_if_new("report", {
        "name": "noise_report",
        "rows": [[float(v), p, _jsonsafe(results[v][p])]
                 for v in sorted(results) for p in sorted(results[v])]})
    print(f"noise-eval: report at {path}")
    return 0


def cmd_synth(cfg: ExperimentConfig, args) -> int:
    if cfg.dataset.synthetic is None:
        raise StageError("config has no dataset.synthetic section")
    recordings, class_names = _recordings(cfg)
    out_dir = Path(args.out) if args.out else cfg.experiment_dir / "synth"
    out_dir.mkdir(parents=True, exist_ok=True)
    users = []
    for rec in recordings:
        csv_name = f"{rec.user_id}.csv"
        write_recording_csv(rec, out_dir / csv_name)
        users.append({"user_id": rec.user_id, "path": csv_name})
    write_manifest(out_dir / "manifest.json", 50.0, class_names, users)
    print(f"synth: wrote {len(recordings)} user CSVs and manifest.json to {out_dir}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="experiment config JSON")
    common.add_argument("--experiment", metavar="ID",
                        help="experiment id (overrides the config file)")
    common.add_argument("--jobs", type=int, metavar="N",
                        help="parallel workers (overrides the config file)")
    common.add_argument("--verbose", action="store_true",
                        help="per-architecture progress output")

    parser = argparse.ArgumentParser(
        prog="zcnas",
        description="Training-free architecture search pipeline for "
                    "accelerometer time-series classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", parents=[common],
                   help="draw architectures into the experiment ledger")
    sub.add_parser("score", parents=[common],
                   help="compute all configured proxies for every sampled spec")
    p_train = sub.add_parser("train", parents=[common],
                             help="fully train a subset of the sampled specs")
    group = p_train.add_mutually_exclusive_group()
    group.add_argument("--all", action="store_true", help="train every sampled spec")
    group.add_argument("--top-k", type=int, metavar="K",
                       help="train the top K specs ranked by --proxy")
    group.add_argument("--hashes", metavar="H1,H2,...",
                       help="train an explicit comma-separated hash list")
    p_train.add_argument("--proxy", metavar="NAME",
                         help="proxy to rank by when using --top-k")
    sub.add_parser("evaluate", parents=[common],
                   help="compute ranking metrics over the trained results")
    sub.add_parser("noise-eval", parents=[common],
                   help="re-evaluate checkpoints under test-split noise")
    p_synth = sub.add_parser("synth", parents=[common],
                             help="write the synthetic dataset as CSVs plus manifest")
    p_synth.add_argument("--out", metavar="DIR", help="output directory")
    return parser


COMMANDS = {
    "sample": cmd_sample,
    "score": cmd_score,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "noise-eval": cmd_noise_eval,
    "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, experiment_id=args.experiment, jobs=args.jobs)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, StageError, StoreError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
