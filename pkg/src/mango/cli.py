"""Command-line entry point.

Subcommands: ``gen-data``, ``train``, ``sample``, ``predict``, ``fidelity``,
``eval`` and ``replay``. Each one writes ``<output>.manifest.json`` next to
its main output; ``replay`` re-runs a manifest and checks the digests.

Settings resolve as flag > ``--config`` JSON file > built-in default.
Exit codes: 0 ok, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, bench, scaling
from .core import DataError, apply_sense, load_dataset, save_dataset, write_atomic, write_dataset_csv
from .guidance import GuidanceConfig
from .pipeline import PipelineError, default_targets, evaluate_candidates, generate, internal_scores, normalized_dataset, predict, true_scores
from .scaling import ScalingConfig
from .sde import VPSchedule
from .training import Checkpoint, TrainConfig, TrainingDiverged, fit

log = logging.getLogger("mango")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# Defaults per subcommand; keys are flag names with '_' for '-'.
DEFAULTS: dict[str, dict[str, Any]] = {
    "gen-data": {"task": None, "n": None, "removal": 0.4, "seed": 0, "out": None},
    "train": {
        "data": None, "out": None, "epochs": None, "batch_size": 256, "lr": 5e-5,
        "weight_decay": 1e-4, "seed": 0, "width": 256, "depth": 3, "time_embed": 64,
        "beta_min": 0.1, "beta_max": 20.0, "schedule_scale": 1.0, "steps": 200, "ema": 0.0,
    },
    "sample": {
        "checkpoint": None, "out": None, "k": 256, "y_pref": None, "box": None,
        "alpha_x": 0.0, "alpha_y": 1.0, "steps": 200, "seed": 0, "task": None, "data": None,
        "scaling": "none", "j": 16, "alpha_i": 0.1, "every": 5, "tau": None, "m_fidelity": 512,
    },
    "predict": {"checkpoint": None, "design": None, "out": None, "alpha_x": 1000.0, "steps": 200, "seed": 0, "chains": 1},
    "fidelity": {"checkpoint": None, "data": None, "out": None, "m_fidelity": 512, "steps": 200, "seed": 0},
    "eval": {"candidates": None, "task": None, "data": None, "out": None, "resolution": 200, "seed": 0, "score_source": "true"},
}
REQUIRED = {
    "gen-data": ("task", "out"),
    "train": ("data", "out"),
    "sample": ("checkpoint", "out"),
    "predict": ("checkpoint", "design", "out"),
    "fidelity": ("checkpoint", "data", "out"),
    "eval": ("candidates", "task", "out"),
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mango", description="Offline optimization with a design-score diffusion model.")
    p.add_argument("--version", action="version", version=f"mango {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON file with flat keys mirroring flag names")
        sp.add_argument("--out", type=Path)
        sp.add_argument("--seed", type=int)

    g = sub.add_parser("gen-data", help="sample a synthetic offline dataset")
    common(g)
    g.add_argument("--task", choices=sorted(bench.TASKS))
    g.add_argument("--n", type=int)
    g.add_argument("--removal", type=float)

    t = sub.add_parser("train", help="train a score model on a dataset CSV")
    common(t)
    t.add_argument("--data", type=Path)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--weight-decay", type=float)
    t.add_argument("--width", type=int)
    t.add_argument("--depth", type=int)
    t.add_argument("--time-embed", type=int)
    t.add_argument("--beta-min", type=float)
    t.add_argument("--beta-max", type=float)
    t.add_argument("--schedule-scale", type=float, help="multiplier on the beta rates (steps for per-step rates)")
    t.add_argument("--steps", type=int)
    t.add_argument("--ema", type=float, help="parameter moving-average decay; 0 turns it off")

    s = sub.add_parser("sample", help="generate candidates from a checkpoint")
    common(s)
    s.add_argument("--checkpoint", type=Path)
    s.add_argument("--k", type=int)
    s.add_argument("--y-pref", help="preferred scores in task units: 'a,b' or 'a,b;c,d'")
    s.add_argument("--box", help="design box in task units: 'lo:hi,lo:hi,...'")
    s.add_argument("--alpha-x", type=float)
    s.add_argument("--alpha-y", type=float)
    s.add_argument("--steps", type=int)
    s.add_argument("--task", choices=sorted(bench.TASKS))
    s.add_argument("--data", type=Path, help="training CSV (fidelity gate and default targets)")
    s.add_argument("--scaling", choices=["none", "self-is", "fks"])
    s.add_argument("--j", type=int)
    s.add_argument("--alpha-i", type=float)
    s.add_argument("--every", type=int)
    s.add_argument("--tau", type=float)
    s.add_argument("--m-fidelity", type=int)

    pr = sub.add_parser("predict", help="estimate the score of a design")
    common(pr)
    pr.add_argument("--checkpoint", type=Path)
    pr.add_argument("--design", help="comma-separated design in task units")
    pr.add_argument("--alpha-x", type=float)
    pr.add_argument("--steps", type=int)
    pr.add_argument("--chains", type=int)

    f = sub.add_parser("fidelity", help="model fidelity against its training data")
    common(f)
    f.add_argument("--checkpoint", type=Path)
    f.add_argument("--data", type=Path)
    f.add_argument("--m-fidelity", type=int)
    f.add_argument("--steps", type=int)

    e = sub.add_parser("eval", help="HV / IGD report for a candidates CSV")
    common(e)
    e.add_argument("--candidates", type=Path)
    e.add_argument("--task", choices=sorted(bench.TASKS))
    e.add_argument("--data", type=Path, help="training CSV for the normalizing reference")
    e.add_argument("--resolution", type=int)
    e.add_argument("--score-source", choices=["true", "file"])

    r = sub.add_parser("replay", help="re-run a manifest and verify its output digests")
    r.add_argument("manifest", type=Path)
    return p


def resolve(command: str, args: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None) is not None:
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from None
        for k, v in file_cfg.items():
            key = k.replace("-", "_")
            if key not in cfg:
                raise UsageError(f"unknown config key {k!r} for {command}")
            cfg[key] = v
    for key in cfg:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    for key in ("out", "data", "checkpoint", "candidates"):
        if isinstance(cfg.get(key), Path):
            cfg[key] = str(cfg[key])
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"{command}: missing required " + ", ".join("--" + k.replace("_", "-") for k in missing))
    return cfg


def resolved_argv(command: str, cfg: dict) -> list[str]:
    argv = [command]
    for k, v in cfg.items():
        if v is None:
            continue
        text = v if isinstance(v, str) else repr(v) if isinstance(v, float) else str(v)
        # '--key=value' keeps negative numbers from parsing as flags
        argv.append("--" + k.replace("_", "-") + "=" + text)
    return argv


# -- helpers ---------------------------------------------------------------------------


def digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_y_pref(text: str) -> np.ndarray:
    return np.array([_floats(part) for part in str(text).split(";") if part.strip()])


def _parse_box(text: str) -> np.ndarray:
    rows = []
    for part in str(text).split(","):
        try:
            lo, hi = part.split(":")
            rows.append([float(lo), float(hi)])
        except ValueError:
            raise UsageError(f"box entries look like lo:hi, got {part!r}") from None
    return np.array(rows)


def _write_json(path: Path, obj) -> None:
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _write_manifest(command: str, cfg: dict, inputs: list[Path], outputs: list[Path], started: float, extra: dict | None = None) -> Path:
    out = Path(cfg["out"])
    manifest = {
        "command": command,
        "argv": resolved_argv(command, cfg),
        "config": cfg,
        "seeds": {k: v for k, v in cfg.items() if k == "seed"},
        "inputs": {str(p): digest(p) for p in inputs},
        "outputs": {str(p): digest(p) for p in outputs},
        "wall_time_s": round(time.time() - started, 3),
        "version": __version__,
    }
    if "checkpoint" in cfg:
        manifest["checkpoint_id"] = digest(Path(cfg["checkpoint"]))
    if extra:
        manifest.update(extra)
    path = _manifest_path(out)
    _write_json(path, manifest)
    return path


def _need(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"missing file: {p}")
    return p


# -- commands -----------------------------------------------------------------------


def cmd_gen_data(cfg: dict, started: float) -> list[Path]:
    task = bench.get_task(cfg["task"])
    n = cfg["n"] or (bench.DEFAULT_N_MOO if task.is_moo else bench.DEFAULT_N_SOO)
    cfg["n"] = n
    ds = bench.generate_dataset(task.task_id, n, cfg["removal"], cfg["seed"])
    outs = save_dataset(Path(cfg["out"]), ds, task.spec.bounds)
    _write_manifest("gen-data", cfg, [], outs, started, {"n_retained": ds.n})
    return outs


def cmd_train(cfg: dict, started: float) -> list[Path]:
    data = _need(cfg["data"])
    ds, meta = load_dataset(data)
    if cfg["epochs"] is None:
        cfg["epochs"] = 400 if ds.m > 1 else 800
    scale = cfg["schedule_scale"]
    sched = VPSchedule(cfg["beta_min"] * scale, cfg["beta_max"] * scale, cfg["steps"])
    tcfg = TrainConfig(
        epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr_peak=cfg["lr"],
        weight_decay=cfg["weight_decay"], seed=cfg["seed"], schedule=sched, ema_decay=cfg["ema"],
    )
    try:
        ck, trainlog = fit(ds, tcfg, cfg["width"], cfg["depth"], cfg["time_embed"], meta.get("bounds"))
    except TrainingDiverged as exc:
        out = Path(cfg["out"])
        bad = out.with_name(out.stem + ".diverged.json")
        exc.checkpoint.save(bad)
        raise RuntimeError(f"{exc}; last finite checkpoint written to {bad}") from None
    out = Path(cfg["out"])
    ck.save(out)
    log_path = out.with_name(out.stem + ".trainlog.csv")
    write_atomic(log_path, trainlog.to_csv())
    _write_manifest("train", cfg, [data], [out, log_path], started, {"final_loss": trainlog.mean_loss[-1]})
    return [out, log_path]


def cmd_sample(cfg: dict, started: float) -> list[Path]:
    ck = Checkpoint.load(_need(cfg["checkpoint"]))
    task = bench.get_task(cfg["task"]) if cfg["task"] else None
    dataset = load_dataset(_need(cfg["data"]))[0] if cfg["data"] else None
    K = cfg["k"]
    if K is None or K < 1:
        raise UsageError("--k must be >= 1")
    y_pref = None
    if cfg["y_pref"] is not None:
        y_pref = internal_scores(ck, _parse_y_pref(cfg["y_pref"]))
    elif cfg["alpha_y"] > 0 or cfg["scaling"] != "none":
        y_pref = default_targets(ck, K, task, dataset)
    box = None
    if cfg["box"] is not None:
        raw = _parse_box(cfg["box"])
        box = np.column_stack([ck.normalizer.design.normalize(raw[:, 0]), ck.normalizer.design.normalize(raw[:, 1])])
    gcfg = GuidanceConfig(y_pref, box, cfg["alpha_x"], cfg["alpha_y"], cfg["steps"], cfg["seed"])
    scfg = None
    if cfg["scaling"] != "none":
        scfg = ScalingConfig(cfg["scaling"], cfg["j"], cfg["alpha_i"], cfg["every"], cfg["tau"], cfg["m_fidelity"])
    cands = generate(ck, gcfg, K, scfg, dataset)
    out = Path(cfg["out"])
    write_dataset_csv(out, cands.X, apply_sense(cands.Y, ck.sense_original))
    inputs = [Path(cfg["checkpoint"])] + ([Path(cfg["data"])] if cfg["data"] else [])
    extra = {
        "fidelity": cands.fidelity,
        "scaling_active": scfg is not None and scaling._gate_open(cands.fidelity, scfg, ck.net.m),
        "nfe_per_particle": cands.result.nfe_per_particle,
        "n_nonfinite": int((~cands.finite).sum()),
    }
    _write_manifest("sample", cfg, inputs, [out], started, extra)
    return [out]


def cmd_predict(cfg: dict, started: float) -> list[Path]:
    ck = Checkpoint.load(_need(cfg["checkpoint"]))
    x = np.array(_floats(cfg["design"]))
    if x.size != ck.net.d:
        raise UsageError(f"--design needs {ck.net.d} numbers")
    gcfg = GuidanceConfig(None, None, cfg["alpha_x"], 0.0, cfg["steps"], cfg["seed"])
    p = predict(ck, x, gcfg, cfg["chains"])
    out = Path(cfg["out"])
    _write_json(out, {"design": x.tolist(), "score": [float(v) for v in p.y.reshape(-1)], "converged": p.converged})
    _write_manifest("predict", cfg, [Path(cfg["checkpoint"])], [out], started)
    return [out]


def cmd_fidelity(cfg: dict, started: float) -> list[Path]:
    ck = Checkpoint.load(_need(cfg["checkpoint"]))
    ds = load_dataset(_need(cfg["data"]))[0]
    F = scaling.fidelity(ck.net, ck.schedule, normalized_dataset(ck, ds), cfg["m_fidelity"], cfg["seed"], cfg["steps"])
    out = Path(cfg["out"])
    _write_json(out, {"fidelity": F, "M": cfg["m_fidelity"]})
    print(json.dumps({"fidelity": F}))
    _write_manifest("fidelity", cfg, [Path(cfg["checkpoint"]), Path(cfg["data"])], [out], started)
    return [out]


def cmd_eval(cfg: dict, started: float) -> list[Path]:
    task = bench.get_task(cfg["task"])
    cand_ds, _ = load_dataset(_need(cfg["candidates"]))
    if cand_ds.d != task.spec.d or cand_ds.m != task.spec.m:
        raise DataError(f"candidates have d={cand_ds.d}, m={cand_ds.m}; {task.task_id} needs {task.spec.d}, {task.spec.m}")
    if cfg["score_source"] == "file":
        Y = cand_ds.Y
    else:
        Y = true_scores(task, cand_ds.X)
    inputs = [Path(cfg["candidates"])]
    if cfg["data"]:
        train_Y = load_dataset(_need(cfg["data"]))[0].Y
        inputs.append(Path(cfg["data"]))
    else:
        train_Y = Y
    report = evaluate_candidates(task, Y, train_Y, cfg["resolution"], cfg["seed"])
    out = Path(cfg["out"])
    _write_json(out, report.to_dict())
    csv_path = out.with_suffix(".csv")
    write_atomic(csv_path, report.csv_header() + "\n" + report.csv_row() + "\n")
    _write_manifest("eval", cfg, inputs, [out, csv_path], started)
    return [out, csv_path]


COMMANDS: dict[str, Callable[[dict, float], list[Path]]] = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "predict": cmd_predict,
    "fidelity": cmd_fidelity,
    "eval": cmd_eval,
}


def replay(manifest_path: Path) -> int:
    manifest = json.loads(_need(manifest_path).read_text(encoding="utf-8"))
    expected = manifest["outputs"]
    code = run(manifest["argv"])
    if code != 0:
        return code
    bad = [p for p, h in expected.items() if not Path(p).exists() or digest(Path(p)) != h]
    for p in bad:
        print(f"digest mismatch: {p}", file=sys.stderr)
    return 2 if bad else 0


def _limit_threads():
    n = os.environ.get("MANGO_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(n))


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        if args.command == "replay":
            return replay(args.manifest)
        cfg = resolve(args.command, args)
    except UsageError as exc:
        print(f"mango: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"mango: error: {exc}", file=sys.stderr)
        return 2
    started = time.time()
    limiter = _limit_threads()
    try:
        outputs = COMMANDS[args.command](cfg, started)
    except UsageError as exc:
        print(f"mango: usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, PipelineError, FileNotFoundError, KeyError, ValueError, RuntimeError, OSError) as exc:
        print(f"mango: error: {exc}", file=sys.stderr)
        return 2
    finally:
        if limiter is not None:
            limiter.unregister()
    for p in outputs:
        log.info("wrote %s", p)
    return 0


def main() -> None:
    sys.exit(run())
