"""Command line: simulate, fit, tune, predict, evaluate, scree, experiment.

Every option can also come from a JSON file given with ``--config`` (keys are
the option names with dashes replaced by underscores); flags on the command
line win. A run manifest written by a previous run is accepted as a config
file, which reruns that command with the same settings.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import (DataError, FitConfig, HipError, NumericalError, SolverSettings,
                   identity_standardization, standardize_subgroup, validate_dataset)
from .experiment import METRICS, run_experiment, summarize
from .io import (RunManifest, load_dataset, read_json, save_dataset, write_csv, write_json)
from .model import FittedModel
from .predict import selection_metrics
from .selection import CRITERIA, SearchSpec, evaluate_candidate, lambda_search, select_K
from .simgen import DIMENSIONS, GroundTruth, ScenarioSpec, generate_dataset, generate_test_dataset

log = logging.getLogger("hipmv")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
JOBS_ENV = "HIPMV_JOBS"


class UsageError(Exception):
    pass


DEFAULTS = {
    "common": {"out": ".", "verbose": False},
    "simulate": {"family": "zip", "overlap": "full", "dim": "low", "seed": 0, "n": [250, 260], "n_test": None,
                 "K": 2, "tau": 0.25, "n_signal": 50, "n_common": 25},
    "model": {"family": None, "K": 2, "ntop": "10%", "seed": 0, "iter_max": 200, "eps": 1e-5,
              "standardization": "subgroup", "gamma": None, "L0": 1.0, "eta": 0.5, "inner_max_iter": 500,
              "inner_tol": 1e-6, "adagrad_lr": 0.1},
    "fit": {"lambda_g": None, "lambda_xi": None},
    "search": {"mode": "random", "steps": 8, "range": "0:2", "criterion": "ebic1", "search_seed": 0,
               "random_fraction": 0.2, "jobs": None},
    "predict": {},
    "evaluate": {"data": None},
    "scree": {"threshold": 0.2, "standardization": "subgroup"},
    "experiment": {"family": "zip", "engines": ["zip", "poisson"], "overlap": "full", "dim": "low",
                   "n": [250, 260], "replicates": 5, "seeds": None, "seed_start": 0,
                   "metrics": ["tpr", "fpr", "f1", "prediction"], "K": 2, "ntop": [50, 50], "seed": 0,
                   "iter_max": 200, "eps": 1e-5, "L0": 1.0, "eta": 0.5, "inner_max_iter": 500,
                   "inner_tol": 1e-6, "adagrad_lr": 0.1, "standardization": "subgroup", "gamma": None},
}

GROUPS = {
    "simulate": ("simulate",),
    "fit": ("model", "fit"),
    "tune": ("model", "search"),
    "predict": ("predict",),
    "evaluate": ("evaluate",),
    "scree": ("scree",),
    "experiment": ("search", "experiment"),
}


def _add(p, *names, **kw):
    p.add_argument(*names, default=argparse.SUPPRESS, **kw)


def _model_args(p):
    _add(p, "--data", help="training data set manifest (dataset.json)")
    _add(p, "--family", choices=["multiclass", "poisson", "zip"], help="defaults to the manifest family")
    _add(p, "--K", type=int, help="number of latent components (default 2)")
    _add(p, "--ntop", nargs="+", help="variables kept per view: one integer per view or a percentage like 10%%")
    _add(p, "--seed", type=int, help="initialization seed")
    _add(p, "--iter-max", type=int)
    _add(p, "--eps", type=float, help="relative objective change for convergence")
    _add(p, "--standardization", choices=["subgroup", "none"])
    _add(p, "--gamma", type=int, nargs="+", help="0/1 per view; 0 leaves a view unpenalized")
    _add(p, "--L0", type=float, help="initial Lipschitz estimate for backtracking")
    _add(p, "--eta", type=float, help="backtracking shrink factor")
    _add(p, "--inner-max-iter", type=int)
    _add(p, "--inner-tol", type=float)
    _add(p, "--adagrad-lr", type=float)


def _search_args(p):
    _add(p, "--mode", choices=["grid", "random"])
    _add(p, "--steps", type=int, help="grid points per lambda")
    _add(p, "--range", help="lambda range low:high; low itself is excluded")
    _add(p, "--criterion", choices=sorted(CRITERIA))
    _add(p, "--search-seed", type=int, help="seed for the random candidate subset")
    _add(p, "--random-fraction", type=float)
    _add(p, "--jobs", type=int, help=f"worker processes (default ${JOBS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hipmv", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        _add(p, "--config", help="JSON file of option values, or a run manifest to rerun")
        _add(p, "--out", help="output directory")
        _add(p, "-v", "--verbose", action="store_true")
        return p

    p = command("simulate", "write a synthetic training and test data set with its ground truth")
    _add(p, "--family", choices=["multiclass", "poisson", "zip"])
    _add(p, "--overlap", choices=["full", "partial"])
    _add(p, "--dim", choices=sorted(DIMENSIONS))
    _add(p, "--seed", type=int)
    _add(p, "--n", type=int, nargs="+", help="training samples per subgroup")
    _add(p, "--n-test", type=int, nargs="+", help="test samples per subgroup (default: same as --n)")
    _add(p, "--K", type=int)
    _add(p, "--tau", type=float, help="zero-state probability for zip data")
    _add(p, "--n-signal", type=int)
    _add(p, "--n-common", type=int)

    p = command("fit", "fit one (lambda_G, lambda_xi) pair, rank variables and refit the subset")
    _model_args(p)
    _add(p, "--lambda-g", type=float)
    _add(p, "--lambda-xi", type=float)

    p = command("tune", "search lambda pairs by eBIC and keep the best subset refit")
    _model_args(p)
    _search_args(p)

    p = command("predict", "score new data with a fitted model")
    _add(p, "--model", help="fit_result.json from fit or tune")
    _add(p, "--data", help="data set manifest to predict")

    p = command("evaluate", "compare a model's selected variables against simulation truth")
    _add(p, "--model")
    _add(p, "--truth", help="truth.json written by simulate")
    _add(p, "--data", help="optional test data set for the prediction metric")

    p = command("scree", "singular values and the suggested number of components")
    _add(p, "--data")
    _add(p, "--threshold", type=float)
    _add(p, "--standardization", choices=["subgroup", "none"])

    p = command("experiment", "simulation study: replicates of simulate, tune and evaluate")
    _add(p, "--family", choices=["multiclass", "poisson", "zip"], help="family the data are drawn from")
    _add(p, "--engines", nargs="+", choices=["multiclass", "poisson", "zip"])
    _add(p, "--overlap", choices=["full", "partial"])
    _add(p, "--dim", choices=sorted(DIMENSIONS))
    _add(p, "--n", type=int, nargs="+", help="training (and test) samples per subgroup")
    _add(p, "--replicates", type=int)
    _add(p, "--seeds", type=int, nargs="+", help="explicit replicate seeds (overrides --replicates)")
    _add(p, "--seed-start", type=int)
    _add(p, "--metrics", nargs="+", choices=list(METRICS[:4]))
    _add(p, "--K", type=int)
    _add(p, "--ntop", nargs="+")
    _add(p, "--seed", type=int, help="initialization seed of every fit")
    _add(p, "--iter-max", type=int)
    _add(p, "--eps", type=float)
    _search_args(p)
    return ap


def resolve(ns: argparse.Namespace) -> dict:
    """Built-in defaults, then the config file, then explicit flags."""
    given = vars(ns).copy()
    command = given.pop("command")
    cfg = dict(DEFAULTS["common"])
    for g in GROUPS[command]:
        cfg.update(DEFAULTS[g])
    cfg.update({"model": None, "data": None, "truth": None} if command in ("predict", "evaluate") else {})
    if command in ("fit", "tune", "scree"):
        cfg.setdefault("data", None)
    path = given.pop("config", None)
    if path:
        obj = read_json(path)
        if obj.get("format") == "hipmv-run":
            if obj.get("command") != command:
                raise UsageError(f"{path} is a manifest of '{obj.get('command')}', not '{command}'")
            obj = obj["config"]
        unknown = set(obj) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for '{command}': {sorted(unknown)}")
        cfg.update(obj)
    cfg.update(given)
    if "jobs" in cfg and cfg["jobs"] is None:
        cfg["jobs"] = int(os.environ.get(JOBS_ENV, "1"))
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def parse_ntop(value, p: list) -> tuple:
    """Integers per view, or one percentage applied to every view (rounded, at least 1)."""
    vals = value if isinstance(value, list) else [value]
    vals = [str(v) for v in vals]
    if len(vals) == 1 and vals[0].endswith("%"):
        try:
            frac = float(vals[0][:-1]) / 100.0
        except ValueError:
            raise UsageError(f"bad --ntop {vals[0]!r}") from None
        if not 0 < frac <= 1:
            raise UsageError("--ntop percentage must lie in (0, 100]")
        return tuple(max(1, int(round(frac * pd))) for pd in p)
    try:
        out = tuple(int(v) for v in vals)
    except ValueError:
        raise UsageError(f"bad --ntop {vals}") from None
    if len(out) != len(p):
        raise UsageError(f"--ntop needs one value per view ({len(p)}), got {len(out)}")
    if any(n < 1 or n > pd for n, pd in zip(out, p)):
        raise UsageError(f"--ntop values must lie in [1, p] with p={list(p)}")
    return out


def parse_range(text: str) -> tuple:
    try:
        low, high = (float(v) for v in str(text).split(":"))
    except ValueError:
        raise UsageError(f"--range must look like low:high, got {text!r}") from None
    return low, high


def fit_config(cfg: dict, family: str, lambda_G: float = 1.0, lambda_xi: float = 1.0) -> FitConfig:
    solver = SolverSettings(L0=cfg["L0"], eta=cfg["eta"], max_iter=cfg["inner_max_iter"], tol=cfg["inner_tol"],
                            adagrad_lr=cfg["adagrad_lr"])
    try:
        return FitConfig(K=cfg["K"], lambda_G=lambda_G, lambda_xi=lambda_xi, family=family,
                         gamma=None if cfg["gamma"] is None else tuple(cfg["gamma"]), epsilon_conv=cfg["eps"],
                         iter_max=cfg["iter_max"], seed=cfg["seed"], standardization=cfg["standardization"],
                         solver=solver)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def search_spec(cfg: dict, n_top: tuple) -> SearchSpec:
    try:
        return SearchSpec(n_top=n_top, mode=cfg["mode"], num_steps=cfg["steps"], lambda_range=parse_range(cfg["range"]),
                          criterion=cfg["criterion"], random_fraction=cfg["random_fraction"], seed=cfg["search_seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _standardize(data, kind):
    if kind == "subgroup":
        return standardize_subgroup(data)
    return data, identity_standardization(data)


def _load_training(cfg, manifest: RunManifest):
    _require(cfg, "data")
    data = load_dataset(cfg["data"], cfg.get("family"))
    manifest.add_input(cfg["data"])
    if data.outcome is None:
        raise DataError("training data need an outcome")
    report = validate_dataset(data, cfg["K"])
    if not report.ok:
        raise DataError("invalid data set:\n  " + "\n  ".join(report.violations))
    return data


def fit_result(data, std, cfg, config, n_top, cand, search=None) -> dict:
    """FitResult document for a fitted candidate (fit) or the search winner (tune)."""
    model = FittedModel.from_fit(data, std, cand.selection, cand.subset_params)
    warnings = [f"full fit: {w}" for w in cand.trace.warnings] + [f"subset refit: {w}" for w in cand.subset_trace.warnings]
    full = cand.params
    doc = {
        "format": "hipmv-fit",
        "engine_version": __version__,
        "mode": "tune" if search else "fit",
        "family": config.family,
        "config": config.to_dict(),
        "n_top": list(n_top),
        "data": {"views": [{"name": v.name, "p": v.p} for v in data.views],
                 "subgroups": [{"name": g.name, "n": g.n} for g in data.subgroups]},
        "model": model.to_dict(),
        "full_fit": {"B": [[b.tolist() for b in row] for row in full.all_B()], "Theta": full.Theta.tolist(),
                     "beta0": full.beta0.tolist(), "tau": full.tau, "converged": cand.trace.converged,
                     "trace": cand.trace.to_dict()},
        "selection": cand.selection.to_dict(data.views),
        "subset_fit": {"converged": cand.subset_trace.converged, "trace": cand.subset_trace.to_dict()},
        "ebic": cand.ebic,
        "train_metric": model.metric(data),
        "converged": bool(cand.trace.converged and cand.subset_trace.converged),
        "warnings": warnings,
    }
    if search is not None:
        spec, candidates = search
        doc["search"] = {
            "mode": spec.mode, "num_steps": spec.num_steps, "lambda_range": list(spec.lambda_range),
            "criterion": spec.criterion, "random_fraction": spec.random_fraction, "seed": spec.seed,
            "n_candidates": len(candidates),
            "candidates": [c.summary() for c in candidates],
            "best": {"lambda_G": cand.lambda_G, "lambda_xi": cand.lambda_xi},
        }
    return doc


def cmd_simulate(cfg, out: Path, manifest: RunManifest) -> int:
    try:
        spec = ScenarioSpec.standard(family=cfg["family"], overlap=cfg["overlap"], dimension=cfg["dim"],
                                     n=tuple(cfg["n"]), K=cfg["K"], tau=cfg["tau"], n_signal=cfg["n_signal"],
                                     n_common=cfg["n_common"], seed=cfg["seed"],
                                     n_test=None if cfg["n_test"] is None else tuple(cfg["n_test"]))
        train, truth = generate_dataset(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    test = generate_test_dataset(spec, truth)
    manifest.seeds = [spec.seed]
    files = save_dataset(train, out / "train").files + save_dataset(test, out / "test").files
    files.append(write_json(out / "truth.json", {"format": "hipmv-truth", "scenario": _spec_dict(spec),
                                                 **truth.to_dict()}, "truth"))
    manifest.outputs += files
    for name, data in (("train", train), ("test", test)):
        shapes = ", ".join(f"{v.name}/{g.name}: {g.n}x{v.p}" for v in data.views for g in data.subgroups)
        print(f"{name}: {shapes}")
    return EXIT_OK


def _spec_dict(spec: ScenarioSpec) -> dict:
    d = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(spec).items()}
    d["beta0"], d["Theta"] = spec.true_beta0.tolist(), spec.true_Theta.tolist()
    return d


def cmd_fit(cfg, out: Path, manifest: RunManifest) -> int:
    _require(cfg, "lambda_g", "lambda_xi")
    data = _load_training(cfg, manifest)
    config = fit_config(cfg, data.outcome.family, cfg["lambda_g"], cfg["lambda_xi"])
    n_top = parse_ntop(cfg["ntop"], data.p)
    std_data, std = _standardize(data, config.standardization)
    manifest.seeds = [config.seed]
    t0 = time.perf_counter()
    cand = evaluate_candidate(std_data, config, n_top)
    manifest.timings["fit_seconds"] = time.perf_counter() - t0
    if not cand.ok:
        raise NumericalError(cand.error)
    return _finish_fit(fit_result(data, std, cfg, config, n_top, cand), out, manifest)


def cmd_tune(cfg, out: Path, manifest: RunManifest) -> int:
    data = _load_training(cfg, manifest)
    config = fit_config(cfg, data.outcome.family)
    n_top = parse_ntop(cfg["ntop"], data.p)
    spec = search_spec(cfg, n_top)
    if cfg["jobs"] < 1:
        raise UsageError("--jobs must be at least 1")
    std_data, std = _standardize(data, config.standardization)
    manifest.seeds = [config.seed, spec.seed]
    t0 = time.perf_counter()
    try:
        best, candidates = lambda_search(std_data, config, spec, jobs=cfg["jobs"])
    except HipError as exc:
        raise NumericalError(str(exc)) from None
    manifest.timings["search_seconds"] = time.perf_counter() - t0
    manifest.timings["candidate_seconds"] = [c.seconds for c in candidates]
    print(f"evaluated {len(candidates)} candidates; best lambda_G={best.lambda_G:g}, lambda_xi={best.lambda_xi:g}")
    best_config = config.replace(lambda_G=best.lambda_G, lambda_xi=best.lambda_xi)
    doc = fit_result(data, std, cfg, best_config, n_top, best, (spec, candidates))
    return _finish_fit(doc, out, manifest)


def _finish_fit(doc: dict, out: Path, manifest: RunManifest) -> int:
    manifest.outputs.append(write_json(out / "fit_result.json", doc, "fit_result"))
    manifest.warnings += doc["warnings"]
    for w in doc["warnings"]:
        log.warning("%s", w)
    m = doc["train_metric"]
    print(f"eBIC: " + ", ".join(f"{k}={v:.6g}" for k, v in doc["ebic"].items()))
    print(f"training {m['name']}: {m['value']:.6g}" + ("" if doc["converged"] else " (not converged, see warnings)"))
    return EXIT_OK


def _load_model(cfg, manifest) -> tuple:
    _require(cfg, "model")
    doc = read_json(cfg["model"], "fit_result")
    manifest.add_input(cfg["model"])
    return doc, FittedModel.from_dict(doc["model"])


def cmd_predict(cfg, out: Path, manifest: RunManifest) -> int:
    _require(cfg, "data")
    _, model = _load_model(cfg, manifest)
    data = load_dataset(cfg["data"], model.family if model.family != "multiclass" else None)
    manifest.add_input(cfg["data"])
    report = validate_dataset(data, training=False)
    if not report.ok:
        raise DataError("invalid data set:\n  " + "\n  ".join(report.violations))
    if data.outcome is not None and (data.outcome.family == "multiclass") != (model.family == "multiclass"):
        raise DataError(f"test outcome family {data.outcome.family!r} does not match model family {model.family!r}")
    pred = model.predict(data)
    K = model.Theta.shape[0]
    for s, grp in enumerate(data.subgroups):
        cols = [list(range(grp.n))] + [pred.scores[s][:, k] for k in range(K)] + [pred.outcome[s]]
        header = ["sample"] + [f"score{k + 1}" for k in range(K)]
        header.append("predicted_class" if model.family == "multiclass" else "expected_count")
        if data.outcome is not None:
            header.append("observed")
            cols.append(data.outcome.labels(s) if model.family == "multiclass" else data.outcome.values[s])
        manifest.outputs.append(write_csv(out / f"predictions_{grp.name}.csv", header, cols))
    doc = {"format": "hipmv-metrics", "family": model.family,
           "subgroups": [g.name for g in data.subgroups], "ridged": pred.ridged}
    if data.outcome is None:
        notice = "no outcome in the data set; metrics not computed"
        print(notice)
        doc["notice"] = notice
    else:
        doc["metrics"] = model.metric(data, pred)
        print(f"{doc['metrics']['name']}: {doc['metrics']['value']:.6g}")
    manifest.outputs.append(write_json(out / "metrics.json", doc, "metrics"))
    return EXIT_OK


def cmd_evaluate(cfg, out: Path, manifest: RunManifest) -> int:
    _require(cfg, "truth")
    doc, model = _load_model(cfg, manifest)
    truth_doc = read_json(cfg["truth"], "truth")
    manifest.add_input(cfg["truth"])
    truth = GroundTruth.from_dict(truth_doc)
    selected = doc["selection"]["selected"]
    if len(truth.signal) != len(selected) or any(len(a) != len(b) for a, b in zip(truth.signal, selected)):
        raise DataError("truth and model disagree on the number of views or subgroups")
    p = [v["p"] for v in doc["data"]["views"]]
    blocks = []
    for d, row in enumerate(selected):
        for s, sel in enumerate(row):
            m = selection_metrics(truth.signal[d][s], sel, p[d])
            blocks.append({"view": d, "subgroup": s, "tpr": m.tpr, "fpr": m.fpr, "f1": m.f1,
                           "undefined": list(m.undefined)})
    res = {"format": "hipmv-evaluation", "blocks": blocks,
           "mean": {k: float(np.mean([b[k] for b in blocks])) for k in ("tpr", "fpr", "f1")}}
    if cfg.get("data"):
        data = load_dataset(cfg["data"], model.family if model.family != "multiclass" else None)
        manifest.add_input(cfg["data"])
        res["prediction"] = model.metric(data)
    manifest.outputs.append(write_json(out / "evaluation.json", res, "evaluation"))
    print(", ".join(f"mean {k}={v:.4f}" for k, v in res["mean"].items()))
    return EXIT_OK


def cmd_scree(cfg, out: Path, manifest: RunManifest) -> int:
    _require(cfg, "data")
    if not 0 < cfg["threshold"] < 1:
        raise UsageError("--threshold must lie in (0, 1)")
    data = load_dataset(cfg["data"])
    manifest.add_input(cfg["data"])
    data, _ = _standardize(data, cfg["standardization"])
    K, sigma = select_K(data, cfg["threshold"], "concatenated")
    per = select_K(data, cfg["threshold"], "per_view_subgroup")
    rows = [("concatenated", "", "", k + 1, v) for k, v in enumerate(sigma)]
    for (d, s), (_, sg) in per.items():
        rows += [("per_view_subgroup", data.views[d].name, data.subgroups[s].name, k + 1, v) for k, v in enumerate(sg)]
    manifest.outputs.append(write_csv(out / "scree.csv", ["target", "view", "subgroup", "index", "sigma"],
                                      [list(c) for c in zip(*rows)]))
    doc = {"format": "hipmv-scree", "threshold": cfg["threshold"], "suggested_K": K,
           "per_view_subgroup": [{"view": data.views[d].name, "subgroup": data.subgroups[s].name, "suggested_K": k}
                                 for (d, s), (k, _) in per.items()]}
    manifest.outputs.append(write_json(out / "scree.json", doc, "scree"))
    print(f"suggested K (concatenated, threshold {cfg['threshold']:g}): {K}")
    return EXIT_OK


def cmd_experiment(cfg, out: Path, manifest: RunManifest) -> int:
    seeds = cfg["seeds"] if cfg["seeds"] is not None else list(range(cfg["seed_start"], cfg["seed_start"] + cfg["replicates"]))
    if len(seeds) < 1:
        raise UsageError("need at least one replicate")
    if cfg["jobs"] < 1:
        raise UsageError("--jobs must be at least 1")
    try:
        spec = ScenarioSpec.standard(family=cfg["family"], overlap=cfg["overlap"], dimension=cfg["dim"], K=cfg["K"],
                                     n=tuple(cfg["n"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n_top = parse_ntop(cfg["ntop"], list(spec.p))
    search = search_spec(cfg, n_top)
    config = fit_config(cfg, cfg["engines"][0])
    manifest.seeds = list(seeds)
    t0 = time.perf_counter()
    results = run_experiment(spec, cfg["engines"], seeds, search, config, jobs=cfg["jobs"])
    manifest.timings["experiment_seconds"] = time.perf_counter() - t0
    manifest.timings["replicate_seconds"] = [r.seconds for r in results]
    rows = summarize(results, cfg["metrics"])
    keys = ["engine", "overlap", "metric", "mean", "sd", "n_success", "n_total"]
    manifest.outputs.append(write_csv(out / "summary.csv", keys, [[r[k] for r in rows] for k in keys]))
    reps = [{"seed": r.seed, "engine": r.engine, "overlap": r.overlap, "metrics": r.metrics,
             "lambdas": None if r.lambdas is None else list(r.lambdas), "error": r.error} for r in results]
    manifest.outputs.append(write_json(out / "replicates.json", {"format": "hipmv-experiment", "replicates": reps},
                                       "experiment"))
    failed = [r for r in results if r.error]
    for r in failed:
        manifest.warnings.append(f"replicate seed={r.seed} engine={r.engine} failed: {r.error}")
    for r in rows:
        print(f"{r['engine']:>10} {r['overlap']:>8} {r['metric']:>10}  {r['mean']:.4f} +/- {r['sd']:.4f}"
              f"  ({r['n_success']}/{r['n_total']})")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "tune": cmd_tune, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "scree": cmd_scree, "experiment": cmd_experiment}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    command = ns.command
    try:
        cfg = resolve(ns)
    except (UsageError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg["out"])
    manifest = RunManifest(command, argv, cfg, [])
    t0 = time.perf_counter()
    try:
        code = COMMANDS[command](cfg, out, manifest)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        code = EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    manifest.timings["total_seconds"] = time.perf_counter() - t0
    manifest.exit_code = code
    manifest.write(out / f"run_{command}.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
