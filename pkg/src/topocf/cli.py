"""Command-line pipeline: profile -> sample -> run -> explain, with persistent artifacts.

Output tree under ``--out``::

    manifest.json                       config, provenance, finished stages
    profile/profile.json|csv, degree_distribution.svg
    kcore/graph.json, interactions.tsv
    samples/manifest.json, sNNNNN.json, characteristics.csv|json
    runs/cells/<sample>__<model>.json   one file per finished cell (resume unit)
    runs/history/<sample>__<model>.csv
    runs/metrics.csv|json
    explain/correlation.csv, explain/<model>/report.json, coefficients.csv|svg
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .characteristics import FEATURE_LABELS, FEATURE_NAMES, degree_distribution, degree_histogram, profile
from .config import PipelineConfig, load_config, make_config
from .errors import ConfigError, DataError, EmptyAfterFiltering, RankDeficient, TooFewSamples, TopoCFError
from .explain import design_matrix, ols_fit, pearson_corr, significance_format
from .graph import (_atomic_write_text, build_matrix, kcore_filter, load_graph, load_interactions, save_graph,
                    split, write_interactions)
from .numerics import RngStream
from .plots import coefficient_bars_svg, degree_distribution_svg
from .sampler import generate_samples
from .training import fit_and_evaluate

log = logging.getLogger("topocf")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 2, 3, 4
SOURCE = "source"
# signs the explanatory model is expected to show on real data; logged, never enforced
EXPECTED_SIGNS = {"density": "+", "gini_item": "+", "shape": "-"}


class StageError(TopoCFError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {exc}")
        self.stage, self.cause = stage, exc


# ------------------------------------------------------------------ artifacts

def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path: Path, doc):
    _atomic_write_text(path, _dumps(doc))


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in r])
    _atomic_write_text(path, buf.getvalue())


def read_csv(path: Path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _update_manifest(cfg: PipelineConfig, stage: str, info: dict):
    path = Path(cfg.out) / "manifest.json"
    doc = json.loads(path.read_text()) if path.exists() else {}
    if doc.get("provenance", {}).get("config_hash") not in (None, cfg.hash()):
        doc = {}  # different configuration: start a fresh manifest
    doc["provenance"] = cfg.provenance()
    doc["config"] = cfg.semantic_dict()
    doc.setdefault("stages", {})[stage] = info
    write_json(path, doc)


# ------------------------------------------------------------------ data

def load_source(cfg: PipelineConfig):
    """Dataset (interaction file or graph JSON) after optional k-core filtering."""
    path = Path(cfg.data)
    if path.suffix == ".json":
        R, ids = load_graph(path)
    else:
        R, ids = build_matrix(load_interactions(path, cfg.format))
    if cfg.kcore:
        R = kcore_filter(R, cfg.kcore)
        ids = ids.restrict(R) if ids is not None else None
    if R.is_empty():
        raise EmptyAfterFiltering(f"no interactions left in {path} after {cfg.kcore}-core filtering")
    return R, ids


def make_split(cfg: PipelineConfig, R):
    # keyed on graph content so the acceptance check and the run see the same split
    seed = RngStream(cfg.seed).derive("split", R.content_hash()).stream
    return split(R, cfg.split_strategy, cfg.split_ratios, seed % 2**32).prune_cold()


def usable_for_training(cfg: PipelineConfig, R) -> bool:
    try:
        s = make_split(cfg, R)
    except DataError:
        return False
    return s.train.n_edges > 0 and bool((s.test.user_degrees > 0).any())


# ------------------------------------------------------------------ verbs

def cmd_profile(cfg: PipelineConfig) -> int:
    cfg.validate()
    R, _ = load_source(cfg)
    p = profile(R, cfg.effective_d_min, cfg.log_features)
    out = Path(cfg.out) / "profile"
    doc = dict(p.to_dict(), provenance=cfg.provenance(), d_min=cfg.effective_d_min, feature_order=list(FEATURE_NAMES),
               labels=dict(zip(FEATURE_NAMES, FEATURE_LABELS)))
    write_json(out / "profile.json", doc)
    write_csv(out / "profile.csv", ["feature", "label", "raw", "value", "log10"],
              [(n, l, float(r), float(v), int(a)) for n, l, r, v, a in
               zip(FEATURE_NAMES, FEATURE_LABELS, p.record.raw, p.record.values, p.record.log_applied)])
    series = {"all nodes": degree_distribution(R)}
    for label, deg in (("users", R.user_degrees), ("items", R.item_degrees)):
        series[label] = {d: c / deg.size for d, c in degree_histogram(deg).items()}
    _atomic_write_text(out / "degree_distribution.svg", degree_distribution_svg(series))
    _update_manifest(cfg, "profile", {"n_users": R.n_users, "n_items": R.n_items, "n_edges": R.n_edges,
                                      "content_hash": R.content_hash()})
    return EXIT_OK


def cmd_kcore(cfg: PipelineConfig) -> int:
    cfg.validate()
    R, ids = load_source(cfg)
    out = Path(cfg.out) / "kcore"
    save_graph(out / "graph.json", R, ids)
    write_interactions(out / "interactions.tsv", R, ids)
    _update_manifest(cfg, "kcore", {"k": cfg.kcore, "n_users": R.n_users, "n_items": R.n_items,
                                    "n_edges": R.n_edges, "content_hash": R.content_hash()})
    return EXIT_OK


def cmd_sample(cfg: PipelineConfig) -> int:
    cfg.validate()
    if cfg.samples < 1:
        raise ConfigError("sample needs --samples >= 1")
    R, _ = load_source(cfg)
    profiles = {}

    def accept(g):
        # keep only samples that can be split for training and profiled
        if not usable_for_training(cfg, g):
            return False
        try:
            profiles[g.content_hash()] = profile(g, cfg.effective_d_min, cfg.log_features)
        except DataError:
            return False
        return True

    pool = generate_samples(R, cfg.samples, (cfg.mu_lo, cfg.mu_hi), RngStream(cfg.seed).derive("pool"),
                            accept=accept)
    out = Path(cfg.out) / "samples"
    rows, records = [], {}
    for s in pool.samples:
        save_graph(out / f"{s.name}.json", s.graph)
        rec = profiles[s.graph.content_hash()].record
        rows.append([s.name, *rec.values])
        records[s.name] = {"raw": dict(zip(FEATURE_NAMES, rec.raw)),
                           "values": dict(zip(FEATURE_NAMES, rec.values)), "flags": list(rec.flags)}
    write_csv(out / "characteristics.csv", ["sample", *FEATURE_NAMES], rows)
    write_json(out / "characteristics.json", {"provenance": cfg.provenance(), "feature_order": list(FEATURE_NAMES),
                                              "log_features": list(cfg.log_features), "samples": records})
    write_json(out / "manifest.json", {"provenance": cfg.provenance(), "source_hash": pool.source_hash,
                                       "mu_range": list(pool.mu_range), "pool_hash": pool.pool_hash(),
                                       "samples": pool.manifest()})
    _update_manifest(cfg, "sample", {"M": pool.M, "pool_hash": pool.pool_hash()})
    return EXIT_OK


def _sample_sources(cfg: PipelineConfig) -> list:
    """(name, graph path or None) per sample; the source dataset when no pool exists."""
    man = Path(cfg.out) / "samples" / "manifest.json"
    if man.exists():
        doc = json.loads(man.read_text())
        return [(s["name"], str(man.parent / f"{s['name']}.json")) for s in doc["samples"]]
    cfg.validate()
    return [(SOURCE, None)]


def _cell_path(out: Path, sample: str, kind: str) -> Path:
    return out / "runs" / "cells" / f"{sample}__{kind}.json"


def run_cell(cfg_dict: dict, sample: str, graph_path, kind: str) -> dict:
    """Train and test one (sample, model) cell; failures become an error record."""
    cfg = PipelineConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in cfg_dict.items()})
    out = Path(cfg.out)
    doc = {"sample": sample, "model": kind, "provenance": cfg.provenance()}
    try:
        R = load_graph(graph_path)[0] if graph_path else load_source(cfg)[0]
        s = make_split(cfg, R)
        base = RngStream(cfg.seed).derive("cell", sample, kind)
        reps, history = [], []
        for r in range(cfg.repeats):
            res = fit_and_evaluate(cfg.model_config(kind), cfg.train_config(), s,
                                   base if r == 0 else base.derive("repeat", r))
            m, tr = res["metrics"], res["result"]
            reps.append({"repeat": r, "metrics": m.to_dict(), "epochs_run": tr.epochs_run,
                         "best_epoch": tr.best_epoch, "stopped_early": tr.stopped_early})
            history += [{"repeat": r, **row} for row in tr.history]
        metrics = dict(reps[0]["metrics"])
        if cfg.repeats > 1:
            for key in (f"recall@{m.K}", f"ndcg@{m.K}"):
                metrics[key] = float(np.mean([x["metrics"][key] for x in reps]))
        doc.update(status="ok", metrics=metrics, epochs_run=max(x["epochs_run"] for x in reps),
                   best_epoch=reps[0]["best_epoch"] if cfg.repeats == 1 else None,
                   stopped_early=any(x["stopped_early"] for x in reps), closed_form=not res["model"].trainable)
        if cfg.repeats > 1:
            doc["repeats"] = reps
        if getattr(res["model"], "note", None):
            doc["note"] = res["model"].note
        if history:
            keys = list(dict.fromkeys(k for row in history for k in row))
            if cfg.repeats == 1:
                keys.remove("repeat")
            write_csv(out / "runs" / "history" / f"{sample}__{kind}.csv", keys,
                      [[row.get(k) for k in keys] for row in history])
    except Exception as exc:  # isolate every failure to its cell
        log.warning("cell %s/%s failed: %s", sample, kind, exc)
        doc.update(status="error", error=f"{type(exc).__name__}: {exc}")
    write_json(_cell_path(out, sample, kind), doc)
    return doc


def _init_worker():
    import torch
    torch.set_num_threads(1)


def cmd_run(cfg: PipelineConfig) -> int:
    cfg.validate(need_data=not (Path(cfg.out) / "samples" / "manifest.json").exists())
    out = Path(cfg.out)
    sources = _sample_sources(cfg)
    cells, done = [], {}
    for name, path in sources:
        for kind in cfg.kinds:
            cp = _cell_path(out, name, kind)
            if cfg.resume and cp.exists():
                prev = json.loads(cp.read_text())
                if prev.get("status") == "ok" and prev["provenance"]["config_hash"] == cfg.hash():
                    done[(name, kind)] = prev
                    continue
            cells.append((name, path, kind))
    if done:
        log.info("resuming: %d finished cells reused, %d to run", len(done), len(cells))
    cfg_dict = cfg.to_dict()
    if cfg.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(cfg.jobs, initializer=_init_worker) as ex:
            futures = {(n, k): ex.submit(run_cell, cfg_dict, n, p, k) for n, p, k in cells}
            results = {key: f.result() for key, f in futures.items()}
    else:
        results = {(n, k): run_cell(cfg_dict, n, p, k) for n, p, k in cells}
    results.update(done)
    # merge in a fixed order so the table does not depend on completion order
    K = cfg.K
    header = ["sample", "model", "status", f"recall@{K}", f"ndcg@{K}", "evaluated_users", "epochs_run",
              "best_epoch", "error"]
    rows, docs = [], []
    for name, _ in sources:
        for kind in cfg.kinds:
            d = results[(name, kind)]
            m = d.get("metrics", {})
            rows.append([name, kind, d["status"], m.get(f"recall@{K}"), m.get(f"ndcg@{K}"),
                         m.get("evaluated_users"), d.get("epochs_run"), d.get("best_epoch"), d.get("error")])
            docs.append(d)
    write_csv(out / "runs" / "metrics.csv", header, rows)
    write_json(out / "runs" / "metrics.json", {"provenance": cfg.provenance(), "K": K, "cells": docs})
    failed = sum(d["status"] != "ok" for d in docs)
    _update_manifest(cfg, "run", {"cells": len(docs), "failed": failed})
    return EXIT_PARTIAL if failed else EXIT_OK


def explain_model(features: dict, responses: dict):
    """OLS of one model's response on the per-sample characteristics.

    ``features`` maps sample -> 11 transformed values, ``responses`` maps sample -> metric.
    """
    names = sorted(set(features) & set(responses))
    if len(names) < len(FEATURE_NAMES) + 2:
        raise TooFewSamples(f"need at least {len(FEATURE_NAMES) + 2} completed samples, got {len(names)}")
    D = design_matrix([features[n] for n in names], FEATURE_NAMES)
    y = np.array([responses[n] for n in names])
    return names, D, ols_fit(D, y)


def cmd_explain(cfg: PipelineConfig) -> int:
    out = Path(cfg.out)
    char_path, metrics_path = out / "samples" / "characteristics.csv", out / "runs" / "metrics.csv"
    for p in (char_path, metrics_path):
        if not p.exists():
            raise DataError(f"missing input {p}; run the earlier stages first")
    features = {r["sample"]: [float(r[n]) for n in FEATURE_NAMES] for r in read_csv(char_path)}
    metric_rows = read_csv(metrics_path)
    col = f"{cfg.response}@{cfg.K}"
    if metric_rows and col not in metric_rows[0]:
        raise ConfigError(f"metrics table has no column {col}")
    models = list(dict.fromkeys(r["model"] for r in metric_rows))

    D_all = design_matrix(list(features.values()), FEATURE_NAMES) if len(features) >= 3 else None
    if D_all is not None and D_all.C:
        C = pearson_corr(D_all)
        write_csv(out / "explain" / "correlation.csv", ["feature", *D_all.names],
                  [[n, *map(float, C[k])] for k, n in enumerate(D_all.names)])

    status = {}
    for model in models:
        responses = {r["sample"]: float(r[col]) for r in metric_rows
                     if r["model"] == model and r["status"] == "ok" and r[col] not in ("", None)}
        try:
            names, D, rep = explain_model(features, responses)
        except (TooFewSamples, RankDeficient, DataError) as exc:
            log.warning("explain %s: %s", model, exc)
            status[model] = f"{type(exc).__name__}: {exc}"
            continue
        ranked = significance_format(rep)
        checks = {}
        for feat, sign in EXPECTED_SIGNS.items():
            if feat in rep.names:
                c = float(rep.coef[rep.names.index(feat)])
                got = "+" if c > 0 else "-" if c < 0 else "0"
                checks[feat] = {"expected": sign, "observed": got, "agrees": got == sign}
                log.info("%s: %s coefficient sign %s (expected %s)", model, feat, got, sign)
        doc = {"provenance": cfg.provenance(), "model": model, "response": col, "samples": names,
               "feature_order": list(rep.names), "regression": rep.to_dict(), "ranking": ranked,
               "qualitative_check": checks}
        mdir = out / "explain" / model
        write_json(mdir / "report.json", doc)
        write_csv(mdir / "coefficients.csv", ["name", "coef", "se", "t", "p"],
                  [[c["name"], c["coef"], c["se"], c["t"], c["p"]] for c in doc["regression"]["coefficients"]])
        label = dict(zip(FEATURE_NAMES, FEATURE_LABELS))
        _atomic_write_text(mdir / "coefficients.svg", coefficient_bars_svg(
            [{"name": label[r["name"]], "coef": r["coef"], "p": r["p"]} for r in ranked],
            title=f"{model}: {col}"))
        status[model] = "ok"
    _update_manifest(cfg, "explain", {"models": status})
    ok = sum(v == "ok" for v in status.values())
    if models and ok == 0:
        raise TooFewSamples("no model could be explained: " + "; ".join(f"{m}: {v}" for m, v in status.items()))
    return EXIT_OK if ok == len(models) else EXIT_PARTIAL


def cmd_pipeline(cfg: PipelineConfig) -> int:
    cfg.validate()
    codes = []
    stages = [("profile", cmd_profile)]
    if cfg.samples > 0:
        stages.append(("sample", cmd_sample))
    stages.append(("run", cmd_run))
    if cfg.samples > 0:
        stages.append(("explain", cmd_explain))
    for stage, fn in stages:
        try:
            codes.append(fn(cfg))
        except TopoCFError as exc:
            raise StageError(stage, exc) from exc
    return max(codes)


def cmd_report(cfg: PipelineConfig) -> int:
    """Human-readable summary of an output directory, written to report.md and stdout."""
    out = Path(cfg.out)
    man = out / "manifest.json"
    if not man.exists():
        raise DataError(f"no manifest in {out}")
    doc = json.loads(man.read_text())
    lines = [f"# topocf report", "", f"config hash {doc['provenance']['config_hash']}, "
             f"version {doc['provenance']['version']}, seed {doc['provenance']['seed']}", ""]
    prof = out / "profile" / "profile.csv"
    if prof.exists():
        lines += ["## Characteristics", "", "| feature | raw | transformed |", "|---|---|---|"]
        lines += [f"| {r['label']} | {float(r['raw']):.6g} | {float(r['value']):.6g} |" for r in read_csv(prof)]
        lines.append("")
    met = out / "runs" / "metrics.csv"
    if met.exists():
        rows = read_csv(met)
        col = next(c for c in rows[0] if c.startswith("recall@")) if rows else None
        lines += ["## Models", "", f"| model | cells ok | failed | mean {col} |", "|---|---|---|---|"]
        for model in dict.fromkeys(r["model"] for r in rows):
            ok = [float(r[col]) for r in rows if r["model"] == model and r["status"] == "ok"]
            bad = sum(1 for r in rows if r["model"] == model and r["status"] != "ok")
            mean = f"{np.mean(ok):.4f}" if ok else "n/a"
            lines.append(f"| {model} | {len(ok)} | {bad} | {mean} |")
        lines.append("")
    exp = out / "explain"
    for rep in sorted(exp.glob("*/report.json")) if exp.exists() else []:
        r = json.loads(rep.read_text())
        lines += [f"## Explanatory model: {r['model']} ({r['response']}), "
                  f"R2 {r['regression']['r2']:.3f}", "", "| rank | feature | coef | p |", "|---|---|---|---|"]
        lines += [f"| {x['rank']} | {x['name']} | {x['coef']:+.4f}{x['stars']} | {x['p']:.3g} |" for x in r["ranking"]]
        lines.append("")
    text = "\n".join(lines)
    _atomic_write_text(out / "report.md", text)
    print(text)
    return EXIT_OK


COMMANDS = {"profile": cmd_profile, "kcore": cmd_kcore, "sample": cmd_sample, "run": cmd_run,
            "explain": cmd_explain, "pipeline": cmd_pipeline, "report": cmd_report}


# ------------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="topocf", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"topocf {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file; flags override its values")
    common.add_argument("--data", help="interaction file (tsv/csv) or graph JSON")
    common.add_argument("--format", choices=["tsv", "csv"])
    common.add_argument("--kcore", type=int, metavar="N")
    common.add_argument("--samples", type=int, metavar="M")
    common.add_argument("--mu-lo", type=float, dest="mu_lo")
    common.add_argument("--mu-hi", type=float, dest="mu_hi")
    common.add_argument("--models", help="comma-separated model kinds")
    common.add_argument("--K", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--repeats", type=int, help="training seeds per cell; metrics are averaged")
    common.add_argument("--jobs", type=int)
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--resume", action="store_true", default=None)
    common.add_argument("--max-epochs", type=int, dest="max_epochs")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
    return ap


def config_from_args(args) -> PipelineConfig:
    file_values = load_config(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in ("data", "format", "kcore", "samples", "mu_lo", "mu_hi", "models",
                                               "K", "seed", "repeats", "jobs", "out", "resume")}
    if args.max_epochs is not None:
        file_values["train"] = dict(file_values.get("train", {}), max_epochs=args.max_epochs)
    return make_config(file_values, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc.cause, ConfigError) else EXIT_DATA
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TopoCFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
