"""hetkit command line.

Typical run, all artifacts land in one output directory::

    hetkit --out run ingest thrusters.csv
    hetkit --out run augment --n 512
    hetkit --out run tune --target thrust_mn --trials 50
    hetkit --out run train
    hetkit --out run surface --x d_mm --y power_w --grid-n 50
    hetkit --out run report

``--env rci`` (default) reads and writes real units; ``--env sci`` reads and
writes min-max scaled values. Models always work in scaled space internally.
Every JSON artifact carries a manifest whose hash covers its own config and
the hashes of the artifacts it was built from, so a downstream command refuses
to mix outputs of different upstream runs.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .augment import GanConfig, generate, train_gan
from .dataset import (
    CSV_COLUMNS,
    FEATURE_NAMES,
    Dataset,
    ScalerParams,
    ThrusterRecord,
    fit_scaler,
    parse_dataset,
    scale,
)
from .errors import HetkitError, NumericalError, OrderingError, UsageError, ValidationError
from .nn import forward, load_model, r2_score, save_model
from .physfit import fit_coefficients_gd
from .scaling import fit_scaling, synthesize_design
from .select import boruta
from .tune import fit_params, history_to_csv, mlp_objective, mlp_search_space, optimize, train_val_split

DESIGN_INPUTS = ("power_w", "ud_v", "d_mm", "h_mm", "l_mm")
SYNTHETIC_EXTRA = ("mape_pct", "kept")

FILES = {
    "dataset": "dataset.json",
    "augment": "augment.json",
    "synthetic": "synthetic.csv",
    "scaling": "scaling.json",
    "physfit": "physfit.json",
    "tune": "best_arch.json",
    "history": "tune_history.csv",
    "selection": "selection.json",
    "model": "model.json",
    "predictions": "predictions.csv",
    "report": "report.json",
}


# -- artifacts and manifests -------------------------------------------------


def config_hash(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def make_manifest(command: str, config: dict, upstream: dict[str, str]) -> dict:
    body = {"command": command, "config": config, "upstream": upstream}
    return {**body, "config_hash": config_hash(body), "hetkit_version": __version__}


def write_json(path: Path, doc: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def read_artifact(out: Path, key: str, hint: str) -> dict:
    path = out / FILES[key]
    if not path.exists():
        raise OrderingError(f"{path} not found; run `hetkit --out {out} {hint}` first")
    doc = json.loads(path.read_text())
    check_fresh(out, doc, path.name)
    return doc


def current_hash(out: Path, key: str) -> str | None:
    path = out / FILES[key]
    if not path.exists():
        return None
    return json.loads(path.read_text())["manifest"]["config_hash"]


def check_fresh(out: Path, doc: dict, label: str) -> None:
    """Raise if any upstream artifact changed since ``doc`` was written."""
    for key, recorded in doc.get("manifest", {}).get("upstream", {}).items():
        now = current_hash(out, key)
        if now != recorded:
            state = "is missing" if now is None else f"is now {now}"
            raise OrderingError(
                f"stale artifact: {label} was built from {FILES[key]} {recorded} but that file {state}; "
                f"rerun the stage that produces {label}"
            )


# -- environment -------------------------------------------------------------


@dataclass
class Environment:
    """Run context: interface mode, dataset source, fitted scaler, seed, output directory."""

    mode: str
    dataset_path: str
    scaler: ScalerParams
    seed: int
    out: Path

    def to_model(self, values: np.ndarray, names: Sequence[str]) -> np.ndarray:
        """Convert user-facing values into scaled model space."""
        values = np.asarray(values, dtype=float)
        if self.mode == "sci":
            return values
        return scale(values, self.scaler.select(names))

    def from_model(self, values: np.ndarray, names: Sequence[str]) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.mode == "sci":
            return values
        sub = self.scaler.select(names)
        return values * (np.asarray(sub.maxs) - np.asarray(sub.mins)) + np.asarray(sub.mins)

    def summary(self) -> dict:
        return {"mode": self.mode, "dataset": self.dataset_path, "seed": self.seed, "out": str(self.out)}


def load_environment(args) -> tuple[Environment, Dataset, dict]:
    doc = read_artifact(args.out, "dataset", "ingest FILE")
    records = tuple(ThrusterRecord(**r) for r in doc["records"])
    dataset = Dataset(records)
    env = Environment(args.env, doc["source"], ScalerParams.from_dict(doc["scaler"]), args.seed, args.out)
    return env, dataset, doc


def modeling_matrix(env: Environment, dataset: Dataset) -> tuple[np.ndarray, dict[str, str]]:
    """Scaled real rows plus kept synthetic rows (when an augment artifact exists)."""
    upstream = {"dataset": current_hash(env.out, "dataset")}
    real = scale(dataset, env.scaler)
    if not (env.out / FILES["augment"]).exists():
        return real, upstream
    doc = read_artifact(env.out, "augment", "augment")
    synth = read_synthetic(env.out / FILES["synthetic"])
    upstream["augment"] = doc["manifest"]["config_hash"]
    kept = synth[synth[:, -1] == 1][:, : len(FEATURE_NAMES)]
    if doc["manifest"]["config"]["env"] == "rci":
        kept = scale(kept, env.scaler) if len(kept) else kept.reshape(0, len(FEATURE_NAMES))
    return np.vstack([real, kept]) if len(kept) else real, upstream


def read_synthetic(path: Path) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(path.read_text())))
    if not rows or tuple(rows[0]) != FEATURE_NAMES + SYNTHETIC_EXTRA:
        raise ValidationError(f"{path}: unexpected synthetic CSV header")
    return np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(rows[0]))


def check_columns(names: Sequence[str], what: str) -> list[str]:
    names = list(names)
    bad = [n for n in names if n not in FEATURE_NAMES]
    if bad:
        raise UsageError(f"unknown {what} {', '.join(bad)}; valid columns: {', '.join(FEATURE_NAMES)}")
    return names


def parse_inputs(text: str | None, target: str, default: Sequence[str] = DESIGN_INPUTS) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()] if text else [n for n in default if n != target]
    names = check_columns(names, "input column")
    if target in names:
        raise UsageError(f"target {target} cannot also be an input")
    if len(set(names)) != len(names):
        raise UsageError("input columns must be distinct")
    return names


def fmt(v: float) -> str:
    return repr(float(v))


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    path.write_text(buf.getvalue())
    return path


# -- commands ----------------------------------------------------------------


def cmd_ingest(args) -> int:
    path = Path(args.csv)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    dataset = parse_dataset(text, permissive=args.permissive)
    scaler = fit_scaler(dataset)
    config = {"sha256": hashlib.sha256(text.encode()).hexdigest(), "permissive": args.permissive}
    doc = {
        "manifest": make_manifest("ingest", config, {}),
        "source": str(path),
        "records": [{"name": r.name, **dict(zip(CSV_COLUMNS[1:], r.values()))} for r in dataset.records],
        "skipped": list(dataset.skipped),
        "scaler": scaler.to_dict(),
        "degenerate": [n for n, d in zip(scaler.feature_names, scaler.degenerate) if d],
    }
    write_json(args.out / FILES["dataset"], doc)
    print(f"ingested {len(dataset)} records, {len(dataset.skipped)} errors")
    for msg in dataset.skipped:
        print(f"  skipped {msg}")
    return 0


def cmd_augment(args) -> int:
    env, dataset, _ = load_environment(args)
    if args.n < 0:
        raise UsageError("--n must be >= 0")
    config = {"n": args.n, "gan_epochs": args.gan_epochs, "seed": args.seed, "env": args.env}
    manifest = make_manifest("augment", config, {"dataset": current_hash(args.out, "dataset")})
    real = scale(dataset, env.scaler)
    gan = train_gan(real, GanConfig(epochs=args.gan_epochs, seed=args.seed), FEATURE_NAMES, ~env.scaler.degenerate)
    batch = generate(gan, args.n, seed=args.seed + 1)
    rows = env.from_model(batch.rows, FEATURE_NAMES) if args.n else batch.rows
    write_csv(
        args.out / FILES["synthetic"],
        FEATURE_NAMES + SYNTHETIC_EXTRA,
        ([*map(fmt, r), fmt(m), int(k)] for r, m, k in zip(rows, batch.mape_pct, batch.kept)),
    )
    stats = {
        "n": args.n,
        "kept": int(batch.kept.sum()),
        "mean_mape_pct": batch.mean_mape,
        "outlier_rate": batch.outlier_rate,
        "final_d_loss": gan.d_loss[-1],
        "final_g_loss": gan.g_loss[-1],
    }
    write_json(args.out / FILES["augment"], {"manifest": manifest, "stats": stats})
    print(f"synthetic rows: {args.n} (kept {stats['kept']})")
    print(f"mean nearest-record MAPE: {stats['mean_mape_pct']:.2f}%")
    print(f"boundary outlier rate: {100 * stats['outlier_rate']:.2f}%")
    return 0


def cmd_fit_scaling(args) -> int:
    _, dataset, _ = load_environment(args)
    coeffs = fit_scaling(dataset)
    doc = {
        "manifest": make_manifest("fit-scaling", {}, {"dataset": current_hash(args.out, "dataset")}),
        "coefficients": coeffs.to_dict(),
    }
    for name in ("c_h", "c_m", "c_p", "c_t"):
        print(f"{name} = {getattr(coeffs, name):.6g}")
    if args.power is not None or args.voltage is not None:
        if args.power is None or args.voltage is None:
            raise UsageError("--power and --voltage must be given together")
        design = synthesize_design(args.power, args.voltage, coeffs)
        doc["design"] = design.to_dict()
        for key in ("d_mm", "h_mm", "mdot_mg_s", "thrust_mn", "isp_s", "eta_anode"):
            lo, hi = design.bands[key]
            print(f"{key:10s} {getattr(design, key):.6g}  [{lo:.6g}, {hi:.6g}]")
    write_json(args.out / FILES["scaling"], doc)
    return 0


def cmd_physfit(args) -> int:
    _, dataset, _ = load_environment(args)
    report = fit_coefficients_gd(dataset, lr=args.lr, epochs=args.epochs, seed=args.seed)
    config = {"lr": args.lr, "epochs": args.epochs, "seed": args.seed}
    doc = {
        "manifest": make_manifest("physfit", config, {"dataset": current_hash(args.out, "dataset")}),
        "report": report.to_dict(),
    }
    write_json(args.out / FILES["physfit"], doc)
    for name, value in report.coefficients.items():
        print(f"{name} = {value:.6g}  (least squares {report.least_squares[name]:.6g}, "
              f"divergence {report.divergence_pct[name]:.3g}%)")
    print(f"converged: {report.converged} after {report.epochs_run} epochs")
    return 0


def cmd_tune(args) -> int:
    env, dataset, _ = load_environment(args)
    target = check_columns([args.target], "target column")[0]
    inputs = parse_inputs(args.inputs, target)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    data, upstream = modeling_matrix(env, dataset)
    split = train_val_split(data[:, [FEATURE_NAMES.index(n) for n in inputs]], data[:, FEATURE_NAMES.index(target)],
                            args.val_fraction, seed=args.seed)
    config = {"target": target, "inputs": inputs, "trials": args.trials, "epochs": args.epochs,
              "val_fraction": args.val_fraction, "seed": args.seed}

    def progress(trial):
        print(f"trial {trial.trial_id:3d}  {trial.status:8s}  R2={trial.score:.4f}", flush=True)

    objective = mlp_objective(split, epochs=args.epochs, seed=args.seed)
    best, history = optimize(mlp_search_space(), objective, n_trials=args.trials, seed=args.seed,
                             on_trial=progress if args.verbose else None)
    (args.out / FILES["history"]).write_text(history_to_csv(history))
    write_json(args.out / FILES["tune"], {
        "manifest": make_manifest("tune", config, upstream),
        "target": target,
        "inputs": inputs,
        "params": best.params,
        "score": best.score,
        "n_rows": len(data),
    })
    print(f"best validation R2 = {best.score:.4f} over {len(history)} trials")
    print("best architecture: " + json.dumps(best.params, sort_keys=True))
    return 0


def explicit_params(args) -> dict | None:
    if not args.layers:
        return None
    widths = [int(w) for w in args.layers.split(",") if w.strip()]
    params = {"n_layers": len(widths), "activation": args.activation, "optimizer": args.optimizer, "lr": args.lr}
    params.update({f"width_{i}": w for i, w in enumerate(widths)})
    if not mlp_search_space().contains(params):
        raise UsageError(f"architecture {params} is outside the supported range (2-6 layers, widths 4-128)")
    return params


def cmd_train(args) -> int:
    env, dataset, _ = load_environment(args)
    params = explicit_params(args)
    upstream_arch = {}
    if params is None:
        arch = read_artifact(args.out, "tune", "tune (or pass --layers)")
        params = arch["params"]
        target = args.target or arch["target"]
        inputs = parse_inputs(args.inputs, target, arch["inputs"]) if args.inputs else arch["inputs"]
        upstream_arch = {"tune": arch["manifest"]["config_hash"]}
    else:
        target = args.target or "thrust_mn"
        inputs = parse_inputs(args.inputs, target)
    check_columns([target], "target column")
    data, upstream = modeling_matrix(env, dataset)
    upstream.update(upstream_arch)
    x = data[:, [FEATURE_NAMES.index(n) for n in inputs]]
    y = data[:, FEATURE_NAMES.index(target)]
    split = train_val_split(x, y, args.val_fraction, seed=args.seed)
    net = fit_params(params, split.x_train, split.y_train, epochs=args.epochs, seed=args.seed)
    pred = forward(net, split.x_val)[:, 0]
    rmse = float(np.sqrt(np.mean((pred - split.y_val) ** 2)))
    sub = env.scaler.select([target])
    rmse_real = rmse * (sub.maxs[0] - sub.mins[0])
    if not np.isfinite(rmse):
        raise NumericalError("validation predictions are not finite")
    validation = {
        "r2": r2_score(split.y_val, pred),
        "rmse_scaled": rmse,
        "rmse_real": rmse_real,
        "band_real": 1.96 * rmse_real,
        "band_scaled": 1.96 * rmse,
        "n_train": len(split.x_train),
        "n_val": len(split.x_val),
    }
    config = {"params": params, "target": target, "inputs": inputs, "epochs": args.epochs,
              "val_fraction": args.val_fraction, "seed": args.seed}
    metadata = {
        "manifest": make_manifest("train", config, upstream),
        "inputs": inputs,
        "target": target,
        "scaler": env.scaler.select(inputs + [target]).to_dict(),
        "params": params,
        "validation": validation,
    }
    save_model(args.out / FILES["model"], net, metadata)
    print(f"trained {target} <- {', '.join(inputs)}")
    print(f"validation R2 = {validation['r2']:.4f}, RMSE = {rmse_real:.4g} (real units), "
          f"95% band +/- {validation['band_real']:.4g}")
    return 0


def load_model_for(args):
    path = Path(args.model) if args.model else args.out / FILES["model"]
    if not path.exists():
        raise OrderingError(f"{path} not found; run `hetkit --out {args.out} train` first")
    net, meta = load_model(path)
    if not args.model:
        check_fresh(args.out, meta, path.name)
    return net, meta, path


def model_environment(args, meta) -> Environment:
    scaler = ScalerParams.from_dict(meta["scaler"])
    return Environment(args.env, meta.get("manifest", {}).get("command", ""), scaler, args.seed, args.out)


def cmd_predict(args) -> int:
    net, meta, _ = load_model_for(args)
    env = model_environment(args, meta)
    inputs, target = meta["inputs"], meta["target"]
    rows, labels = [], []
    if args.row:
        _, dataset, _ = load_environment(args)
        matrix = dataset.matrix()
        for name in args.row:
            if name not in dataset.names:
                raise UsageError(f"no record named {name!r}; known: {', '.join(dataset.names)}")
            real = matrix[dataset.names.index(name), [FEATURE_NAMES.index(n) for n in inputs]]
            rows.append(real if env.mode == "rci" else scale(real, env.scaler.select(inputs))[0])
            labels.append(name)
    if args.set:
        values = dict(kv.split("=", 1) for kv in args.set)
        missing = [n for n in inputs if n not in values]
        if missing:
            raise UsageError(f"--set is missing model inputs: {', '.join(missing)}")
        rows.append([float(values[n]) for n in inputs])
        labels.append("point")
    if args.input_csv:
        table = list(csv.DictReader(io.StringIO(Path(args.input_csv).read_text())))
        for i, rec in enumerate(table):
            try:
                rows.append([float(rec[n]) for n in inputs])
            except KeyError as exc:
                raise ValidationError(f"{args.input_csv}: missing column {exc.args[0]}") from None
            labels.append(rec.get("name") or f"row{i + 2}")
    if not rows:
        raise UsageError("nothing to predict; pass --row, --set or --input-csv")
    x = env.to_model(np.array(rows, dtype=float), inputs)
    pred = env.from_model(forward(net, x)[:, :1], [target])[:, 0]
    band = meta["validation"]["band_real" if env.mode == "rci" else "band_scaled"]
    out_rows = [[label, *map(fmt, row), fmt(p), fmt(p - band), fmt(p + band)]
                for label, row, p in zip(labels, rows, pred)]
    header = ["name", *inputs, target, "band_low", "band_high"]
    args.out.mkdir(parents=True, exist_ok=True)
    write_csv(args.out / FILES["predictions"], header, out_rows)
    for label, p in zip(labels, pred):
        print(f"{label}: {target} = {p:.6g} +/- {band:.3g}")
    return 0


def cmd_surface(args) -> int:
    net, meta, _ = load_model_for(args)
    env = model_environment(args, meta)
    _, dataset, _ = load_environment(args)
    inputs, target = meta["inputs"], meta["target"]
    if args.x == args.y:
        raise UsageError(f"surface needs two distinct features, got {args.x} twice")
    if args.target and args.target != target:
        raise UsageError(f"model predicts {target}, not {args.target}")
    for f in (args.x, args.y):
        if f not in inputs:
            raise UsageError(f"{f} is not a model input; inputs are {', '.join(inputs)}")
    if args.grid_n < 1:
        raise UsageError("--grid-n must be >= 1")
    data = scale(dataset, ScalerParams.from_dict(read_artifact(args.out, "dataset", "ingest FILE")["scaler"]))
    cols = [FEATURE_NAMES.index(n) for n in inputs]
    base = np.median(data[:, cols], axis=0)
    ix, iy = inputs.index(args.x), inputs.index(args.y)
    lo, hi = data[:, cols].min(axis=0), data[:, cols].max(axis=0)
    gx = np.linspace(lo[ix], hi[ix], args.grid_n) if args.grid_n > 1 else np.array([base[ix]])
    gy = np.linspace(lo[iy], hi[iy], args.grid_n) if args.grid_n > 1 else np.array([base[iy]])
    xx, yy = np.meshgrid(gx, gy, indexing="ij")
    grid = np.tile(base, (xx.size, 1))
    grid[:, ix] = xx.ravel()
    grid[:, iy] = yy.ravel()
    pred = forward(net, grid)[:, 0]
    if not np.all(np.isfinite(pred)):
        raise NumericalError("surface contains non-finite predictions")
    sx = env.from_model(grid[:, [ix]], [args.x])[:, 0]
    sy = env.from_model(grid[:, [iy]], [args.y])[:, 0]
    sp = env.from_model(pred[:, None], [target])[:, 0]
    path = Path(args.path) if args.path else args.out / f"surface_{args.x}_{args.y}.csv"
    write_csv(path, [args.x, args.y, target], ([fmt(a), fmt(b), fmt(c)] for a, b, c in zip(sx, sy, sp)))
    print(f"wrote {xx.size} grid rows to {path}")
    return 0


def cmd_export(args) -> int:
    net, meta, src = load_model_for(args)
    dest = Path(args.path)
    meta = {**meta, "exported_from": str(src)}
    save_model(dest, net, meta)
    print(f"exported model to {dest}")
    return 0


def cmd_select(args) -> int:
    env, dataset, _ = load_environment(args)
    target = check_columns([args.target], "target column")[0]
    if args.candidates:
        candidates = check_columns([s.strip() for s in args.candidates.split(",") if s.strip()], "candidate")
    else:
        degenerate = set(np.asarray(FEATURE_NAMES)[env.scaler.degenerate])
        candidates = [n for n in FEATURE_NAMES if n != target and n not in degenerate]
    if target in candidates:
        raise UsageError(f"target {target} cannot be a candidate feature")
    data, upstream = modeling_matrix(env, dataset)
    x = data[:, [FEATURE_NAMES.index(n) for n in candidates]]
    y = data[:, FEATURE_NAMES.index(target)]
    result = boruta(x, y, candidates, max_iter=args.max_iter, seed=args.seed)
    config = {"target": target, "candidates": candidates, "max_iter": args.max_iter, "seed": args.seed}
    write_json(args.out / FILES["selection"], {
        "manifest": make_manifest("select", config, upstream),
        "target": target,
        "confirmed": result.confirmed,
        "tentative": result.tentative,
        "rejected": result.rejected,
        "hits": result.hits,
        "iterations": result.iterations,
    })
    print(result.report(), end="")
    return 0


def cmd_report(args) -> int:
    env, dataset, ds_doc = load_environment(args)
    out = args.out

    def optional(key):
        path = out / FILES[key]
        if not path.exists():
            return None
        doc = json.loads(path.read_text())
        check_fresh(out, doc if key != "model" else doc.get("metadata", {}), path.name)
        return doc

    report = {
        "generated_at": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "environment": {**env.summary(), "n_records": len(dataset), "skipped": ds_doc["skipped"]},
    }
    if (doc := optional("scaling")) is not None:
        report["coefficients"] = doc["coefficients"]
    else:
        report["coefficients"] = fit_scaling(dataset).to_dict()
    if (doc := optional("physfit")) is not None:
        rep = doc["report"]
        report["physfit"] = {k: rep[k] for k in ("coefficients", "divergence_pct", "converged", "final_loss")}
    if (doc := optional("augment")) is not None:
        report["gan"] = doc["stats"]
    if (doc := optional("tune")) is not None:
        report["best_trial"] = {"params": doc["params"], "score": doc["score"], "target": doc["target"]}
    if (doc := optional("selection")) is not None:
        report["selection"] = {k: doc[k] for k in ("target", "confirmed", "tentative", "rejected")}
    if (doc := optional("model")) is not None:
        meta = doc["metadata"]
        report["surrogate"] = {"target": meta["target"], "inputs": meta["inputs"], **meta["validation"]}
    artifacts = {key: str(out / name) for key, name in FILES.items() if key != "report" and (out / name).exists()}
    artifacts.update({p.stem: str(p) for p in sorted(out.glob("surface_*.csv"))})
    artifacts["report"] = str(out / FILES["report"])
    report["artifacts"] = artifacts
    write_json(out / FILES["report"], report)
    print(f"wrote {out / FILES['report']}")
    return 0


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hetkit", description="Hall-effect thruster design toolkit")
    p.add_argument("--version", action="version", version=f"hetkit {__version__}")
    p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    p.add_argument("--env", choices=("rci", "sci"), default="rci",
                   help="rci: real-unit I/O, sci: scaled [0,1] I/O (default rci)")
    p.add_argument("--out", type=Path, default=Path("hetkit-out"), help="artifact directory")
    p.add_argument("--config", help="key=value file of defaults; command-line flags win")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("ingest", help="validate a thruster CSV and store dataset + scaler")
    s.add_argument("csv")
    s.add_argument("--permissive", action="store_true", help="skip bad rows instead of rejecting the file")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("augment", help="train the GAN and write synthetic rows")
    s.add_argument("--n", type=int, default=512)
    s.add_argument("--gan-epochs", type=int, default=GanConfig().epochs)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("fit-scaling", help="closed-form scaling coefficients, optional design point")
    s.add_argument("--power", type=float, help="design input power [W]")
    s.add_argument("--voltage", type=float, help="design discharge voltage [V]")
    s.set_defaults(func=cmd_fit_scaling)

    s = sub.add_parser("physfit", help="gradient-descent coefficient fit vs least squares")
    s.add_argument("--lr", type=float, default=0.5)
    s.add_argument("--epochs", type=int, default=2000)
    s.set_defaults(func=cmd_physfit)

    s = sub.add_parser("tune", help="TPE search over MLP architectures")
    s.add_argument("--target", default="thrust_mn")
    s.add_argument("--inputs", help=f"comma list (default {','.join(DESIGN_INPUTS)} minus target)")
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--epochs", type=int, default=500, help="training epochs per trial")
    s.add_argument("--val-fraction", type=float, default=0.2)
    s.add_argument("--verbose", action="store_true", help="print every trial")
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("select", help="Boruta feature selection for a target")
    s.add_argument("--target", default="thrust_mn")
    s.add_argument("--candidates", help="comma list (default: every non-constant feature except the target)")
    s.add_argument("--max-iter", type=int, default=50)
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("train", help="train the surrogate (tuned or explicit architecture)")
    s.add_argument("--target")
    s.add_argument("--inputs")
    s.add_argument("--layers", help="explicit hidden widths, e.g. 32,32 (skips the tuned architecture)")
    s.add_argument("--activation", default="tanh", choices=("selu", "tanh", "relu"))
    s.add_argument("--optimizer", default="adam", choices=("sgd", "momentum", "adam"))
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--epochs", type=int, default=500)
    s.add_argument("--val-fraction", type=float, default=0.2)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predict with a trained or exported model")
    s.add_argument("--model", help="model file (default OUT/model.json)")
    s.add_argument("--row", action="append", help="record name from the ingested dataset (repeatable)")
    s.add_argument("--set", action="append", metavar="NAME=VALUE", help="one input value (repeatable)")
    s.add_argument("--input-csv", help="CSV with one column per model input")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("surface", help="grid of predictions over two inputs")
    s.add_argument("--x", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--target")
    s.add_argument("--grid-n", type=int, default=50)
    s.add_argument("--model")
    s.add_argument("--path", help="output CSV (default OUT/surface_X_Y.csv)")
    s.set_defaults(func=cmd_surface)

    s = sub.add_parser("export", help="write the model to a portable file")
    s.add_argument("--model")
    s.add_argument("--path", required=True)
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("report", help="collect run results into report.json")
    s.set_defaults(func=cmd_report)
    return p


def read_config(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _subparsers(parser: argparse.ArgumentParser) -> list[argparse.ArgumentParser]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return list(action.choices.values())
    return []


def apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    """Install config values as parser defaults, so explicit flags still override them."""
    targets = [parser] + _subparsers(parser)
    known = set()
    for target in targets:
        for action in target._actions:
            if action.dest in ("help", "version", "config", "command", "func"):
                continue
            known.add(action.dest)
            if action.dest not in values:
                continue
            raw = values[action.dest]
            if isinstance(action, argparse._StoreTrueAction):
                value = raw.lower() in ("1", "true", "yes", "on")
            elif isinstance(action, argparse._AppendAction):
                value = [v.strip() for v in raw.split(";") if v.strip()]
            else:
                value = action.type(raw) if action.type else raw
                if action.choices and value not in action.choices:
                    raise UsageError(f"config {action.dest}={raw!r}: choose from {', '.join(action.choices)}")
            target.set_defaults(**{action.dest: value})
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            apply_config(parser, read_config(known.config))
        args = parser.parse_args(argv)
        args.out = Path(args.out)
        return args.func(args)
    except HetkitError as exc:
        print(f"hetkit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError) as exc:  # bad config values and similar
        print(f"hetkit: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"hetkit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
