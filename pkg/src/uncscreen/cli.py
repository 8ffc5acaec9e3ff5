"""Command-line surface for the screening pipeline.

Subcommands: ``simulate`` (synthetic dataset), ``train`` (three-stream
pipeline), ``eval`` (report files + figures), ``ablate`` (strategy-ladder
sweep), ``gradcheck`` (gradient verification).

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 numerical failure (gradient check).  ``UNCSCREEN_LOG`` selects the log
level (DEBUG/INFO/WARNING/ERROR; default WARNING).

Every artifact-producing run ends by writing ``manifest.json`` next to its
outputs: the config snapshot, effective seed, and SHA-256 hashes of every
input and output file.  Wall-clock timings go to a separate
``timings.json`` that is deliberately excluded from the manifest so two
identical runs produce byte-identical manifests.
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

import numpy as np

from . import __version__
from .config import Config, derive_seed, load_config
from .datagen import GeneratorSpec, build_panel, generate_dataset
from .dataset import read_dataset, sidecar_path, write_dataset
from .errors import DataError
from .gradcheck import DEFAULT_TOLERANCE, run_default_checks
from .losses import Hyperparams
from .metrics import Group
from .report import (
    ablation_rows,
    evaluate_group,
    save_ablation_figure,
    save_bucket_figure,
    save_roc_figure,
    save_severity_figure,
    write_ablation_csv,
    write_buckets_csv,
    write_report_csv,
    write_roc_csv,
    write_severity_csv,
)
from .streams import (
    AblationLevel,
    EpochLog,
    StreamBundle,
    infer_batch,
    load_bundle,
    save_bundle,
    threshold_in_nats,
    train_bundle,
)

__all__ = ["main"]

log = logging.getLogger(__name__)

MANIFEST_FORMAT_VERSION = 1


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on bad flags; this package reserves
    2 for data errors, so usage problems are rerouted to exit code 1."""

    def error(self, message):
        raise _UsageError(message)


def _setup_logging():
    level_name = os.environ.get("UNCSCREEN_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, payload: dict):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


def _write_manifest(
    manifest_path: Path,
    command: str,
    cfg: Config,
    stage_names: list[str],
    inputs: list[Path],
    outputs: list[Path],
    timings: dict[str, float],
):
    base = manifest_path.parent
    manifest = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "command": command,
        "config": cfg.to_dict(),
        "seeds": {name: derive_seed(cfg.seed, name) for name in stage_names},
        "inputs": {str(p): _sha256(p) for p in sorted(inputs)},
        "outputs": {
            os.path.relpath(p, base): _sha256(p) for p in sorted(outputs)
        },
    }
    _write_json(manifest_path, manifest)
    # wall-clock sidecar: informational only, never hashed or manifested
    _write_json(
        manifest_path.with_name("timings.json"),
        {stage: round(seconds, 3) for stage, seconds in timings.items()},
    )


def _load_config_with_overrides(args) -> Config:
    cfg = load_config(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "n", None) is not None:
        overrides["n"] = args.n
    if overrides:
        cfg = Config(**{**{f: getattr(cfg, f) for f in cfg.__dataclass_fields__}, **overrides})
    return cfg


# ---- simulate ---------------------------------------------------------------


def _cmd_simulate(args) -> int:
    cfg = _load_config_with_overrides(args)
    out_path = Path(args.out)
    if out_path.is_dir():
        raise DataError(f"--out must name a file, got directory {out_path}")
    out_path.parent.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    spec = GeneratorSpec.from_config(cfg)
    panel = build_panel(
        k=cfg.k,
        graders=cfg.graders,
        skill=cfg.panel_skill,
        bias_strength=cfg.panel_bias_strength,
        seed=derive_seed(cfg.seed, "panel"),
    )
    records = generate_dataset(spec, panel, cfg.n, seed=derive_seed(cfg.seed, "datagen"))
    meta = {
        "config": cfg.to_dict(),
        "generator": "severity-axis synthetic population",
        "n": cfg.n,
        "seed": cfg.seed,
    }
    write_dataset(records, out_path, meta=meta)
    elapsed = time.perf_counter() - t0

    thr = threshold_in_nats(cfg.u_threshold, cfg.log_base)
    counts = np.zeros(cfg.k, dtype=int)
    u_sums = np.zeros(cfg.k)
    hard = 0
    for rec in records:
        counts[rec.true_class] += 1
        u_sums[rec.true_class] += rec.u
        hard += rec.u > thr
    print(f"wrote {len(records)} samples to {out_path}")
    print(f"class counts: {counts.tolist()}")
    means = [
        f"{u_sums[c] / counts[c]:.6f}" if counts[c] else "NA" for c in range(cfg.k)
    ]
    print(f"mean u per class: [{', '.join(means)}]")
    print(f"hard fraction (u > {thr:.6f}): {hard / len(records):.6f}")

    _write_manifest(
        out_path.with_name(out_path.stem + ".manifest.json"),
        "simulate",
        cfg,
        stage_names=["panel", "datagen"],
        inputs=[],
        outputs=[out_path, sidecar_path(out_path)],
        timings={"simulate": elapsed},
    )
    return 0


# ---- train ---------------------------------------------------------------


_LOG_HEADER = "epoch,train_loss,val_loss,val_accuracy,val_focal,val_decoupling,lr"


def _write_epoch_log(path: Path, entries: list[EpochLog]):
    def fmt(v):
        return "NA" if v is None else f"{v:.6f}"

    lines = [_LOG_HEADER]
    for e in entries:
        lines.append(
            f"{e.epoch},{fmt(e.train_loss)},{fmt(e.val_loss)},{fmt(e.val_accuracy)},"
            f"{fmt(e.val_focal)},{fmt(e.val_decoupling)},{fmt(e.lr)}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_train(args) -> int:
    cfg = _load_config_with_overrides(args)
    data_path = Path(args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    records = read_dataset(data_path, k=cfg.k)
    level = AblationLevel(args.variant) if args.variant != "all" else AblationLevel.M4
    t0 = time.perf_counter()
    bundle, logs = train_bundle(records, cfg, level=level)
    elapsed = time.perf_counter() - t0

    save_bundle(bundle, out_dir)
    outputs = [
        out_dir / "us_weights.json",
        out_dir / "sc_weights.json",
        out_dir / "hc_weights.json",
        out_dir / "bundle.json",
    ]
    for stream in ("us", "sc", "hc"):
        log_path = out_dir / f"{stream}_log.csv"
        _write_epoch_log(log_path, logs[stream])
        outputs.append(log_path)
    if bundle.sc_only:
        print("warning: no hard training cases; bundle is simple-only", file=sys.stderr)
    print(f"trained bundle written to {out_dir}")

    _write_manifest(
        out_dir / "manifest.json",
        "train",
        cfg,
        stage_names=["train:us", "train:sc", "train:hc"],
        inputs=[data_path],
        outputs=outputs,
        timings={"train": elapsed},
    )
    return 0


# ---- eval ---------------------------------------------------------------


def _groups_for(flag: str) -> list[Group]:
    if flag == "whole":
        return [Group.WHOLE_SET]
    if flag == "hard":
        return [Group.HARD_ONLY]
    return [Group.WHOLE_SET, Group.HARD_ONLY]


def _evaluate_bundle(
    bundle: StreamBundle, records, groups: list[Group]
) -> dict[Group, object]:
    test = [r for r in records if r.split.value == "test"]
    if not test:
        raise DataError("dataset has no test-split samples to evaluate")
    features = np.stack([r.features for r in test])
    decisions = infer_batch(bundle, features)
    return {g: evaluate_group(test, decisions, bundle, g) for g in groups}


def _cmd_eval(args) -> int:
    cfg = _load_config_with_overrides(args)
    bundle_dir = Path(args.bundle)
    data_path = Path(args.dataset)
    out_dir = Path(args.out) if args.out else bundle_dir / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)

    bundle = load_bundle(bundle_dir)
    records = read_dataset(data_path, k=bundle.k)
    t0 = time.perf_counter()
    by_group = _evaluate_bundle(bundle, records, _groups_for(args.group))
    reports = list(by_group.values())

    write_report_csv(reports, out_dir / "report.csv")
    write_buckets_csv(reports, out_dir / "buckets.csv")
    write_severity_csv(reports, out_dir / "severity_uncertainty.csv")
    write_roc_csv(reports, out_dir / "roc.csv")
    save_bucket_figure(reports, out_dir / "buckets.png")
    save_severity_figure(reports, out_dir / "severity_uncertainty.png")
    save_roc_figure(reports, out_dir / "roc.png")
    elapsed = time.perf_counter() - t0

    for rep in reports:
        line = (
            f"{rep.group.value}: n={rep.n} accuracy={rep.accuracy:.6f}"
            f" se={'NA' if rep.se is None else f'{rep.se:.6f}'}"
            f" sp={'NA' if rep.sp is None else f'{rep.sp:.6f}'}"
            f" auc={'NA' if rep.auc is None else f'{rep.auc:.6f}'}"
        )
        print(line)

    outputs = [
        out_dir / name
        for name in (
            "report.csv",
            "buckets.csv",
            "severity_uncertainty.csv",
            "roc.csv",
            "buckets.png",
            "severity_uncertainty.png",
            "roc.png",
        )
    ]
    bundle_inputs = [
        bundle_dir / name
        for name in ("bundle.json", "us_weights.json", "sc_weights.json", "hc_weights.json")
    ]
    _write_manifest(
        out_dir / "manifest.json",
        "eval",
        cfg,
        stage_names=[],
        inputs=[data_path, *bundle_inputs],
        outputs=outputs,
        timings={"eval": elapsed},
    )
    return 0


# ---- ablate ---------------------------------------------------------------


def _cmd_ablate(args) -> int:
    cfg = _load_config_with_overrides(args)
    data_path = Path(args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    records = read_dataset(data_path, k=cfg.k)
    levels = (
        tuple(AblationLevel)
        if args.variant == "all"
        else (AblationLevel(args.variant),)
    )

    timings: dict[str, float] = {}
    reports: dict[tuple[Group, AblationLevel], object] = {}
    done: list[AblationLevel] = []
    shared = None
    groups = [Group.WHOLE_SET, Group.HARD_ONLY]
    for level in levels:
        t0 = time.perf_counter()
        try:
            bundle, logs = train_bundle(records, cfg, level=level, shared=shared)
            if shared is None:
                shared = (bundle.us_params, logs["us"], bundle.sc_params, logs["sc"])
            for group, rep in _evaluate_bundle(bundle, records, groups).items():
                reports[(group, level)] = rep
        except Exception:
            if done:
                rows = ablation_rows(done, reports)
                write_ablation_csv(rows, cfg.k, out_dir / "ablation.csv")
                log.error(
                    "variant %s failed; partial results for %s preserved in %s",
                    level.value,
                    [lv.value for lv in done],
                    out_dir / "ablation.csv",
                )
            raise
        timings[f"ablate:{level.value}"] = time.perf_counter() - t0
        done.append(level)

    rows = ablation_rows(done, reports)
    write_ablation_csv(rows, cfg.k, out_dir / "ablation.csv")
    save_ablation_figure(rows, out_dir / "ablation.png")
    for row in rows:
        print(
            f"{row[0]} {row[1]}: n={row[2]} overall={row[-1]:.6f}"
        )

    _write_manifest(
        out_dir / "manifest.json",
        "ablate",
        cfg,
        stage_names=["train:us", "train:sc", "train:hc"],
        inputs=[data_path],
        outputs=[out_dir / "ablation.csv", out_dir / "ablation.png"],
        timings=timings,
    )
    return 0


# ---- gradcheck ---------------------------------------------------------------


def _cmd_gradcheck(args) -> int:
    cfg = _load_config_with_overrides(args)
    hp = Hyperparams(gamma=cfg.gamma, alpha=cfg.alpha, beta=cfg.beta)
    n_seeds = 5
    worst: dict[str, float] = {}
    for i in range(n_seeds):
        seed = derive_seed(cfg.seed, f"gradcheck:{i}")
        for result in run_default_checks(seed=seed, hp=hp):
            worst[result.loss] = max(worst.get(result.loss, 0.0), result.max_rel_error)

    failures = 0
    print(f"{'loss':<16} {'max_rel_error':>14}  status")
    for name, err in worst.items():
        ok = err < DEFAULT_TOLERANCE
        failures += not ok
        print(f"{name:<16} {err:>14.3e}  {'pass' if ok else 'FAIL'}")
    if failures:
        print(f"{failures} gradient check(s) failed", file=sys.stderr)
        return 3
    return 0


# ---- entry point ---------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="uncscreen", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, n_flag=False):
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        if n_flag:
            p.add_argument("--n", type=int, help="override the sample count")

    p = sub.add_parser("simulate", help="generate a synthetic multi-grader dataset")
    common(p, n_flag=True)
    p.add_argument("--out", required=True, help="output dataset path (JSON lines)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="train the three-stream pipeline")
    p.add_argument("dataset", help="dataset file from `simulate`")
    common(p)
    p.add_argument("--out", required=True, help="output directory for the bundle")
    p.add_argument(
        "--variant",
        choices=[lv.value for lv in AblationLevel] + ["all"],
        default="m4",
        help="strategy level for the hard-case net (default m4)",
    )
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained bundle on a dataset")
    p.add_argument("bundle", help="bundle directory from `train`")
    p.add_argument("dataset", help="dataset file")
    common(p)
    p.add_argument(
        "--out", help="output directory (default: eval/ inside the bundle dir)"
    )
    p.add_argument(
        "--group",
        choices=["whole", "hard", "both"],
        default="both",
        help="report group(s) to emit (default both)",
    )
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="run the M1-M4 strategy ladder")
    p.add_argument("dataset", help="dataset file")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--variant",
        choices=[lv.value for lv in AblationLevel] + ["all"],
        default="all",
        help="single level or the whole ladder (default all)",
    )
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("gradcheck", help="verify loss gradients numerically")
    common(p)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
