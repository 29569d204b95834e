"""Command-line entry point: ``chartatlas {fit,nerve,generate,reconstruct,dim-sweep}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .atlas import AtlasModel
from .config import RunConfig
from .homology import homology_groups
from .manifolds import PointCloud, read_cloud, write_cloud
from .nerve import (
    build_nerve,
    check_membership,
    epsilon_sweep,
    export_one_skeleton,
    pairwise_scores,
    read_membership_csv,
    write_barcode_csv,
    write_edges_csv,
)
from .trainer import LOG2, LOG4, LossHistory, dimension_sweep, fit

log = logging.getLogger("chartatlas")


class CliError(Exception):
    pass


def _r(v) -> str:
    return repr(float(v))


def _write_manifest(out: Path, command: str, cfg: RunConfig, started: float, extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg["seed"],
        "config": cfg.as_dict(),
        "wall_time_s": round(time.time() - started, 3),
    }
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "config.txt").write_text(cfg.dump())


def _load_model(path) -> AtlasModel:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"model file not found: {path}")
    return AtlasModel.load(path)


def _model_frame(model: AtlasModel, raw: np.ndarray) -> np.ndarray:
    if raw.shape[1] != model.config.n:
        raise CliError(f"data dimension {raw.shape[1]} does not match model dimension {model.config.n}")
    return raw if model.scaling is None else model.scaling.apply(raw)


def _raw_data(args, cfg: RunConfig) -> np.ndarray:
    if args.data:
        return read_cloud(args.data).raw_points()
    return cfg.load_data().raw_points()


# --- commands -------------------------------------------------------------------------


def cmd_fit(args, cfg: RunConfig, out: Path) -> None:
    started = time.time()
    cloud = cfg.load_data()
    model = AtlasModel.create(cfg.atlas_config(cloud.n), cloud.scaling)
    model.save(out / "init_model.txt")
    write_cloud(cloud, out / "data.csv")
    hist = fit(model, cloud, cfg.loss_config(), seed=cfg["seed"],
               callback=lambda e, h: log.info("epoch %d recon=%.5g disc=%.5g gen=%.5g", e + 1, h.recon[-1], h.disc[-1], h.gen[-1]))
    model.save(out / "model.txt")
    hist.write_csv(out / "loss.csv")
    _write_manifest(out, "fit", cfg, started, {"epochs_completed": len(hist)})


def cmd_nerve(args, cfg: RunConfig, out: Path) -> None:
    started = time.time()
    if args.membership:
        path = Path(args.membership)
        if not path.is_file():
            raise CliError(f"membership file not found: {path}")
        q = read_membership_csv(path)
        d = cfg["model.d"]
    elif args.model:
        model = _load_model(args.model)
        q = check_membership(model.membership_batch(_model_frame(model, _raw_data(args, cfg))))
        d = model.config.d
    else:
        raise CliError("nerve needs --model or --membership")
    with open(out / "membership.csv", "w", encoding="utf-8") as fh:
        for row in q:
            fh.write(",".join(_r(v) for v in row) + "\n")

    method = f"method{cfg['nerve.method']}"
    max_dim = cfg.max_dimension(d)
    if cfg["nerve.epsilon"] > 0:
        cx = build_nerve(q, cfg.nerve_config(d))
        cx.write(out / "simplices.txt", offset=1)
        report = homology_groups(cx, max(1, min(max_dim, cx.dimension)))
        report.write_csv(out / "homology.csv")
        (out / "homology.txt").write_text(str(report) + "\n")
    rows = epsilon_sweep(q, method, cfg.epsilon_grid(), max_dim)
    write_barcode_csv(rows, out / "barcode.csv")
    sweep_dir = out / "sweep"
    sweep_dir.mkdir(exist_ok=True)
    for i, row in enumerate(rows):
        row.complex.write(sweep_dir / f"simplices_{i:03d}.txt", offset=1)
    edges = export_one_skeleton(pairwise_scores(q), cfg["nerve.top_fraction"])
    write_edges_csv(edges, out / "edges.csv", offset=1)
    _write_manifest(out, "nerve", cfg, started, {"model": args.model, "membership": args.membership, "data": args.data})


def cmd_generate(args, cfg: RunConfig, out: Path) -> None:
    started = time.time()
    if not args.model:
        raise CliError("generate needs --model")
    model = _load_model(args.model)
    m = cfg["generate.count"]
    points, labels = model.generate(cfg["generate.seed"], m)
    with open(out / "generated.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chart"] + [f"x{i + 1}" for i in range(model.config.n)])
        for j, p in zip(labels, points):
            w.writerow([int(j) + 1] + [_r(v) for v in p])
    _write_manifest(out, "generate", cfg, started, {"model": args.model})


def cmd_reconstruct(args, cfg: RunConfig, out: Path) -> None:
    started = time.time()
    if not args.model:
        raise CliError("reconstruct needs --model")
    model = _load_model(args.model)
    raw = _raw_data(args, cfg)
    x = _model_frame(model, raw)
    recon, q, err = model.reconstruct(x)
    best = q.argmax(axis=1)
    rec = recon[best, np.arange(len(x))]
    if model.scaling is not None:
        rec = model.scaling.invert(rec)
    n = model.config.n
    with open(out / "reconstruct.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(n)] + ["chart"] + [f"r{i + 1}" for i in range(n)] + ["weighted_error"])
        for i in range(len(x)):
            w.writerow([_r(v) for v in raw[i]] + [int(best[i]) + 1] + [_r(v) for v in rec[i]] + [_r(err[i])])
    _write_manifest(out, "reconstruct", cfg, started, {"model": args.model, "data": args.data})


def cmd_dim_sweep(args, cfg: RunConfig, out: Path) -> None:
    started = time.time()
    cloud = cfg.load_data()
    d_list = list(cfg["sweep.d_list"])
    bad = [d for d in d_list if not 1 <= d <= cloud.n]
    if bad:
        raise CliError(f"latent dimensions {bad} must lie in [1, n={cloud.n}]")
    write_cloud(cloud, out / "data.csv")
    results = dimension_sweep(cloud, d_list, cfg.atlas_config(cloud.n, d_list[0]), cfg.loss_config(),
                              seed=cfg["seed"], workers=args.workers)
    for d, (model, hist) in results.items():
        hist.write_csv(out / f"loss_d{d}.csv")
        model.save(out / f"model_d{d}.txt")
    write_summary(out, d_list)
    _write_manifest(out, "dim-sweep", cfg, started)


def write_summary(out: Path, d_list) -> None:
    """Summary row per d, recomputed from the per-d loss CSVs."""
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d", "final_recon", "final_gen", "final_disc", "gen_minus_log2", "disc_minus_log4"])
        for d in d_list:
            hist = LossHistory.read_csv(out / f"loss_d{d}.csv")
            if not len(hist):
                w.writerow([d, "", "", "", "", ""])
                continue
            r, g, dd = hist.recon[-1], hist.gen[-1], hist.disc[-1]
            w.writerow([d, _r(r), _r(g), _r(dd), _r(g - LOG2), _r(dd - LOG4)])


COMMANDS = {
    "fit": cmd_fit,
    "nerve": cmd_nerve,
    "generate": cmd_generate,
    "reconstruct": cmd_reconstruct,
    "dim-sweep": cmd_dim_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chartatlas", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="config file of 'key = value' lines")
        s.add_argument("--preset", help="built-in preset: circle, torus3, rp2")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
        s.add_argument("-v", "--verbose", action="store_true")
        if name in ("fit", "dim-sweep"):
            s.add_argument("--epochs", type=int)
        if name in ("nerve", "generate", "reconstruct"):
            s.add_argument("--model", help="model file written by 'fit'")
        if name in ("nerve", "reconstruct"):
            s.add_argument("--data", help="headerless CSV of points (default: the configured dataset)")
        if name == "nerve":
            s.add_argument("--membership", help="headerless CSV of membership rows instead of a model")
            s.add_argument("--method", type=int, choices=(1, 2))
            s.add_argument("--epsilon", type=float, help="also build a single nerve at this epsilon")
            s.add_argument("--epsilon-grid", help="START:STOP:COUNT, geometric")
        if name == "generate":
            s.add_argument("-m", "--count", type=int)
        if name == "dim-sweep":
            s.add_argument("--d-list", help="comma-separated latent dimensions")
            s.add_argument("--workers", type=int, default=1)
    return p


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise CliError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    flag_keys = {
        "seed": "seed",
        "epochs": "train.epochs",
        "method": "nerve.method",
        "epsilon": "nerve.epsilon",
        "epsilon_grid": "nerve.epsilon_grid",
        "count": "generate.count",
        "d_list": "sweep.d_list",
    }
    for attr, key in flag_keys.items():
        val = getattr(args, attr, None)
        if val is not None:
            out[key] = str(val)
    if getattr(args, "seed", None) is not None:
        out["generate.seed"] = str(args.seed)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, args.preset, _overrides(args))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg, out)
    except (CliError, ValueError, KeyError, OSError, IndexError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"chartatlas {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
