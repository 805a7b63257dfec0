"""Command-line entry points wiring the pipeline stages together.

Every command records a RunManifest JSON next to its outputs with the full
argument vector and resolved options, so any run can be repeated exactly.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import json
import os
import sys
import time

import click
import numpy as np

from . import __version__, detection as det, evaluation as ev, gbdt
from .cartography import compute_dynamics, dynamics_to_report
from .data_io import (
    _atomic_write,
    clean_dataset_files,
    dataset_prefix,
    fit_encoding,
    load_dataset,
    read_report,
    save_dataset,
    write_report,
)
from .noise import gen_binary_synthetic, gen_multiclass_synthetic, inject


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _write_manifest(out_base: str, command: str, argv: list, options: dict,
                    inputs, outputs, seeds=None, started=None) -> None:
    manifest = {
        "tool": "cartoboost",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "options": options,
        "seeds": seeds or {},
        "inputs": list(inputs),
        "outputs": list(outputs),
        "duration_s": None if started is None else round(time.time() - started, 3),
    }
    path = f"{out_base}.manifest.json"
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    _atomic_write(path, json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def _argv(command: str, positional=(), **options) -> list:
    """Reconstruct an equivalent CLI invocation for the manifest."""
    argv = [command, *positional]
    for key, value in options.items():
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        else:
            argv.extend([flag, str(value)])
    return argv


def read_config_file(path: str) -> dict:
    """Flat key=value config file; blank lines and # comments ignored."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{i}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _train_config(ctx_params: dict, config_file: str = None) -> gbdt.TrainConfig:
    base = {}
    if config_file:
        raw = read_config_file(config_file)
        casts = {"iterations": int, "learning_rate": float, "max_depth": int,
                 "min_child_weight": float, "l2_reg": float, "seed": int}
        for key, cast in casts.items():
            if key in raw:
                base[key] = cast(raw[key])
    for key in ("iterations", "learning_rate", "max_depth", "min_child_weight",
                "l2_reg", "seed"):
        if ctx_params.get(key) is not None:
            base[key] = ctx_params[key]
    defaults = gbdt.TrainConfig()
    return gbdt.TrainConfig(
        num_iterations=base.get("iterations", defaults.num_iterations),
        learning_rate=base.get("learning_rate", defaults.learning_rate),
        max_depth=base.get("max_depth", defaults.max_depth),
        min_child_weight=base.get("min_child_weight", defaults.min_child_weight),
        l2_reg=base.get("l2_reg", defaults.l2_reg),
        seed=base.get("seed", defaults.seed),
    )


train_options = [
    click.option("--iterations", "-t", type=int, default=None, help="Boosting iterations."),
    click.option("--learning-rate", type=float, default=None),
    click.option("--max-depth", type=int, default=None),
    click.option("--min-child-weight", type=float, default=None),
    click.option("--l2-reg", type=float, default=None),
    click.option("--seed", type=int, default=None),
    click.option("--config", "config_file", type=click.Path(exists=True), default=None,
                 help="key=value config file; flags override."),
]


def _with_train_options(fn):
    for opt in reversed(train_options):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(__version__)
def main():
    """Noisy-label detection toolkit for tabular data."""


@main.command("generate")
@click.argument("kind", type=click.Choice(["binary", "multiclass"]))
@click.option("--n", type=int, required=True, help="Instance count.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, help="Output dataset prefix.")
def cmd_generate(kind, n, seed, out):
    """Generate a synthetic dataset (CSV + sidecar)."""
    started = time.time()
    gen = gen_binary_synthetic if kind == "binary" else gen_multiclass_synthetic
    try:
        ds = gen(n, seed)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    out = dataset_prefix(out)
    save_dataset(ds, out)
    _write_manifest(out, "generate",
                    _argv("generate", (kind,), n=n, seed=seed, out=out),
                    {"kind": kind, "n": n, "seed": seed, "out": out},
                    [], [f"{out}.csv", f"{out}.meta.json"],
                    seeds={"generate": seed}, started=started)
    click.echo(f"{ds.n} x {ds.X.shape[1]}, {ds.k_classes} classes -> {out}.csv")


@main.command("inject")
@click.option("--data", "data_path", required=True, help="Input dataset prefix.")
@click.option("--noise", type=click.Choice(["ncar", "nnar"]), required=True)
@click.option("--rate", type=float, required=True)
@click.option("--k", type=int, default=10, show_default=True, help="NNAR neighbour count.")
@click.option("--p", type=float, default=0.5, show_default=True, help="NNAR swap probability.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, help="Output dataset prefix.")
def cmd_inject(data_path, noise, rate, k, p, seed, out):
    """Corrupt labels with NCAR or NNAR noise and record the mask."""
    started = time.time()
    if not (0.0 < rate <= 0.5):
        raise click.UsageError("invalid rate: must lie in (0, 0.5]")
    try:
        ds = load_dataset(data_path)
        features = fit_encoding(ds).matrix if noise == "nnar" else None
        noisy = inject(ds, noise, rate, seed, k=k, p=p, features=features)
    except FileNotFoundError as exc:
        _fail(str(exc))
    except ValueError as exc:
        _fail(str(exc))
    out = dataset_prefix(out)
    save_dataset(noisy, out)
    _write_manifest(out, "inject",
                    _argv("inject", (), data=data_path, noise=noise, rate=rate,
                          k=k, p=p, seed=seed, out=out),
                    {"data": data_path, "noise": noise, "rate": rate, "k": k,
                     "p": p, "seed": seed, "out": out},
                    [f"{dataset_prefix(data_path)}.csv"],
                    [f"{out}.csv", f"{out}.meta.json"],
                    seeds={"inject": seed}, started=started)
    click.echo(f"{int(noisy.noise_mask.sum())} labels corrupted -> {out}.csv")


@main.command("train")
@click.option("--data", "data_path", required=True)
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None,
              help="Optional per-instance weight CSV (id,weight).")
@_with_train_options
@click.option("--out", required=True, help="Output model JSON path.")
def cmd_train(data_path, weights_path, out, config_file, **params):
    """Fit a boosted ensemble on a dataset."""
    started = time.time()
    cfg = _train_config(params, config_file)
    try:
        ds = load_dataset(data_path)
        w = None
        if weights_path:
            ids, values = _read_weights(weights_path)
            w = _align_weights(ds, ids, values)
        model = gbdt.fit(ds.X, ds.y, w, cfg, k_classes=ds.k_classes)
    except (FileNotFoundError, ValueError) as exc:
        _fail(str(exc))
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    gbdt.save_model(model, out)
    _write_manifest(os.path.splitext(out)[0], "train",
                    _argv("train", (), data=data_path, weights=weights_path,
                          iterations=cfg.num_iterations,
                          learning_rate=cfg.learning_rate,
                          max_depth=cfg.max_depth,
                          min_child_weight=cfg.min_child_weight,
                          l2_reg=cfg.l2_reg, seed=cfg.seed, out=out),
                    {"data": data_path, "weights": weights_path, "out": out,
                     "config": cfg.__dict__},
                    [f"{dataset_prefix(data_path)}.csv"], [out],
                    seeds={"train": cfg.seed}, started=started)
    click.echo(f"trained {cfg.num_iterations} iterations on {ds.n} rows -> {out}")


def _read_weights(path: str):
    ids, weights = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "id,weight":
            raise ValueError(f"{path}: expected 'id,weight' header")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            a, b = line.split(",")
            ids.append(int(a))
            weights.append(float(b))
    return np.array(ids, dtype=np.int64), np.array(weights)


def _align_weights(ds, ids, weights):
    by_id = {int(i): float(w) for i, w in zip(ids, weights)}
    try:
        return np.array([by_id[int(i)] for i in ds.ids])
    except KeyError as exc:
        raise ValueError(f"weights file is missing id {exc}") from None


def _write_weights(path: str, ids, weights) -> None:
    lines = ["id,weight"]
    lines.extend(f"{int(i)},{repr(float(w))}" for i, w in zip(ids, weights))
    _atomic_write(path, "\n".join(lines) + "\n")


@main.command("map")
@click.option("--data", "data_path", required=True)
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None,
              help="Optional learned-weight CSV to embed in the report.")
@click.option("--out", required=True, help="Output report JSON path.")
def cmd_map(data_path, model_path, weights_path, out):
    """Compute per-instance training dynamics and write a cartography report."""
    started = time.time()
    try:
        ds = load_dataset(data_path)
        model = gbdt.load_model(model_path)
        dyn = compute_dynamics(model, ds.X, ds.y)
        weights = None
        if weights_path:
            ids, values = _read_weights(weights_path)
            weights = _align_weights(ds, ids, values)
        report = dynamics_to_report(
            dyn, ds.y, ds.ids,
            dataset_id=os.path.basename(dataset_prefix(data_path)),
            weights=weights,
        )
        write_report(report, out)
    except (FileNotFoundError, ValueError, gbdt.ModelFormatError) as exc:
        _fail(str(exc))
    _write_manifest(os.path.splitext(out)[0], "map",
                    _argv("map", (), data=data_path, model=model_path,
                          weights=weights_path, out=out),
                    {"data": data_path, "model": model_path,
                     "weights": weights_path, "out": out},
                    [f"{dataset_prefix(data_path)}.csv", model_path], [out],
                    started=started)
    click.echo(f"mapped {len(report.points)} instances -> {out}")


@main.command("detect")
@click.option("--data", "data_path", default=None, help="Dataset prefix (compute scores).")
@click.option("--from-report", "report_path", default=None,
              help="Cartography report (reuse stored scores).")
@click.option("--method", type=click.Choice(["product", "weights", "low_probability",
                                             "short_confidence", "long_confidence"]),
              required=True)
@click.option("--threshold", default="auto", show_default=True,
              help="Numeric threshold, 'auto' (valley), or 'validation'.")
@click.option("--validation", "validation_path", default=None,
              help="Validation dataset prefix for --threshold validation.")
@click.option("--model", "model_path", default=None,
              help="Model JSON (required for product/heuristic methods with --data).")
@click.option("--rounds", "-e", type=int, default=det.DEFAULT_ROUNDS, show_default=True,
              help="Weight-learning rounds.")
@_with_train_options
@click.option("--out", required=True, help="Output prefix for flags files.")
def cmd_detect(data_path, report_path, method, threshold, validation_path,
               model_path, rounds, out, config_file, **params):
    """Flag suspect instances by product, learned weights, or heuristics."""
    started = time.time()
    if (data_path is None) == (report_path is None):
        raise click.UsageError("provide exactly one of --data or --from-report")
    try:
        result, ids, extra = _run_detection(
            data_path, report_path, method, threshold, validation_path,
            model_path, rounds, params, config_file)
    except (FileNotFoundError, ValueError, gbdt.ModelFormatError,
            det.WeightCollapseError) as exc:
        _fail(str(exc))
    digest = det.config_digest({
        "method": method, "threshold": result.threshold,
        "direction": result.direction, "source": report_path or data_path,
    })
    csv_path, header_path = det.save_flags(result, ids, out, digest)
    outputs = [csv_path, header_path]
    if extra.get("weights") is not None:
        weights_path = f"{out}.weights.csv"
        _write_weights(weights_path, ids, extra["weights"])
        outputs.append(weights_path)
    cfg_dict = extra.get("config") or {}
    _write_manifest(out, "detect",
                    _argv("detect", (), data=data_path, from_report=report_path,
                          method=method, threshold=threshold,
                          validation=validation_path, model=model_path,
                          rounds=rounds,
                          iterations=cfg_dict.get("num_iterations"),
                          learning_rate=cfg_dict.get("learning_rate"),
                          max_depth=cfg_dict.get("max_depth"),
                          min_child_weight=cfg_dict.get("min_child_weight"),
                          l2_reg=cfg_dict.get("l2_reg"),
                          seed=cfg_dict.get("seed"), out=out),
                    {"data": data_path, "from_report": report_path, "method": method,
                     "threshold": threshold, "validation": validation_path,
                     "model": model_path, "rounds": rounds,
                     "config": extra.get("config")},
                    [p for p in (data_path, report_path, model_path) if p],
                    outputs, started=started)
    click.echo(
        f"{int(result.flags.sum())} of {len(ids)} flagged "
        f"({result.score_name} {result.direction} {result.threshold:.6g}) -> {csv_path}"
    )


def _run_detection(data_path, report_path, method, threshold, validation_path,
                   model_path, rounds, params, config_file):
    extra = {}
    if report_path is not None:
        if method not in ("product", "weights"):
            raise ValueError("report-based detection supports product/weights only")
        report = read_report(report_path)
        scores = report.scores("product" if method == "product" else "weight")
        ids = np.array([p.id for p in report.points])
        thr = _resolve_threshold(threshold, scores)
        name = "product" if method == "product" else "weight"
        result = det.DetectionResult(
            flags=scores < thr, score_name=name, scores=scores,
            threshold=float(thr), direction=det.FLAG_IF_BELOW,
        )
        return result, ids, extra

    ds = load_dataset(data_path)
    cfg = _train_config(params, config_file)
    extra["config"] = cfg.__dict__
    if method == "weights":
        traj = det.learn_weights(ds.X, ds.y, cfg, rounds, k_classes=ds.k_classes)
        scores = traj.final
        extra["weights"] = scores
        thr = _resolve_threshold(threshold, scores, ds, validation_path, traj, cfg)
        return det.detect_by_weight(traj, thr), ds.ids, extra
    if method == "product":
        model = _require_model(model_path)
        dyn = compute_dynamics(model, ds.X, ds.y)
        thr = _resolve_threshold(threshold, dyn.product, ds, validation_path, dyn, cfg)
        return det.detect_by_product(dyn, thr), ds.ids, extra
    model = _require_model(model_path)
    probs = gbdt.predict_proba(model, ds.X)
    fn = {"low_probability": det.heuristic_low_probability,
          "short_confidence": det.heuristic_short_confidence,
          "long_confidence": det.heuristic_long_confidence}[method]
    if threshold == "auto":
        result = fn(probs, ds.y)
    else:
        result = fn(probs, ds.y, threshold=float(threshold))
    return result, ds.ids, extra


def _require_model(model_path):
    if not model_path:
        raise ValueError("this method needs --model")
    return gbdt.load_model(model_path)


def _resolve_threshold(threshold, scores, ds=None, validation_path=None,
                       source=None, cfg=None):
    if threshold == "auto":
        return det.auto_valley_threshold(scores)
    if threshold == "validation":
        if ds is None or validation_path is None:
            raise ValueError("--threshold validation needs --data and --validation")
        validation = load_dataset(validation_path)
        cheap = gbdt.TrainConfig(num_iterations=30, learning_rate=cfg.learning_rate,
                                 max_depth=cfg.max_depth, seed=cfg.seed)
        metric = "prauc" if ds.k_classes == 2 else "f1_macro"
        candidates = [round(0.05 * i, 2) for i in range(1, 20)]
        return det.validation_threshold_search(ds, validation, source, candidates,
                                               metric, cheap)
    return float(threshold)


@main.command("clean")
@click.option("--data", "data_path", required=True)
@click.option("--flags", "flags_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, help="Output dataset prefix.")
def cmd_clean(data_path, flags_path, out):
    """Write the dataset minus flagged rows (surviving rows byte-identical)."""
    started = time.time()
    try:
        ids, _, flags = det.load_flags(flags_path)
        kept = clean_dataset_files(data_path, ids[flags], out)
    except (FileNotFoundError, ValueError) as exc:
        _fail(str(exc))
    out = dataset_prefix(out)
    _write_manifest(out, "clean",
                    _argv("clean", (), data=data_path, flags=flags_path, out=out),
                    {"data": data_path, "flags": flags_path, "out": out},
                    [f"{dataset_prefix(data_path)}.csv", flags_path],
                    [f"{out}.csv", f"{out}.meta.json"], started=started)
    click.echo(f"kept {kept} rows ({int(flags.sum())} removed) -> {out}.csv")


@main.command("evaluate")
@click.option("--config", "config_file", required=True, type=click.Path(exists=True),
              help="key=value experiment config.")
@click.option("--out-dir", default=None, help="Override out_dir from the config.")
def cmd_evaluate(config_file, out_dir):
    """Run noise-detection experiments per a config file and emit reports."""
    started = time.time()
    raw = read_config_file(config_file)
    try:
        dataset = raw.get("dataset", "binary")
        noises = [s for s in raw.get("noise", "ncar").split(",") if s]
        rates = [float(s) for s in raw.get("rates", "0.1").split(",") if s]
        methods = [s for s in raw.get("methods", "product_threshold,weight_threshold").split(",") if s]
        seed = int(raw.get("seed", 0))
        budget = int(raw.get("budget", 10))
        n = int(raw["n"]) if "n" in raw else None
        rounds = int(raw.get("rounds", det.DEFAULT_ROUNDS))
        out_dir = out_dir or raw.get("out_dir", "experiments")
        fractions = tuple(float(s) for s in raw.get("fractions", "0.8,0.1,0.1").split(","))
        reports = []
        for noise in noises:
            for rate in rates:
                cell_dir = os.path.join(out_dir, f"{noise}_{rate:g}")
                reports.append(ev.run_experiment(
                    dataset, None if noise == "none" else noise, rate, methods,
                    seed, budget, cell_dir, n=n, rounds=rounds, fractions=fractions,
                ))
        ev.reports_to_csv(reports, os.path.join(out_dir, "summary.csv"))
        combined = [r.to_dict() for r in reports]
        _atomic_write(os.path.join(out_dir, "summary.json"),
                      json.dumps(combined, sort_keys=True, indent=1) + "\n")
    except (FileNotFoundError, ValueError, det.WeightCollapseError) as exc:
        _fail(str(exc))
    _write_manifest(os.path.join(out_dir, "evaluate"), "evaluate",
                    _argv("evaluate", (), config=config_file, out_dir=out_dir),
                    {"config": raw, "out_dir": out_dir}, [config_file],
                    [os.path.join(out_dir, "summary.csv"),
                     os.path.join(out_dir, "summary.json")],
                    seeds={"experiment": seed}, started=started)
    for rep in reports:
        noisy_f1 = rep.noisy_classification.f1
        label = f"{rep.dataset_id} {rep.noise_kind or 'clean'}@{rep.rate:g}"
        click.echo(f"{label}: baseline f1={noisy_f1}")
        for m in rep.methods:
            if m.status == "ok":
                click.echo(f"  {m.method}: removed={m.removed} "
                           f"fpr={m.detection.fpr:.3f} fnr={m.detection.fnr:.3f} "
                           f"f1={m.classification.f1}")
            else:
                click.echo(f"  {m.method}: FAILED ({m.error})")
    click.echo(f"reports -> {out_dir}")


@main.command("serve")
@click.option("--report", "report_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", default=None,
              help="Dataset prefix backing /api/export's cleaned output.")
@click.option("--out-dir", default="exports", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--ui", "ui_dir", default=None, help="Directory with the UI bundle.")
def cmd_serve(report_path, data_path, out_dir, port, host, ui_dir):
    """Serve the report API and threshold-explorer UI."""
    import uvicorn

    from .server import create_app

    try:
        app = create_app(report_path, dataset_path=data_path, out_dir=out_dir,
                         ui_dir=ui_dir)
    except (FileNotFoundError, ValueError) as exc:
        _fail(str(exc))
    click.echo(f"serving {report_path} on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
