"""Command-line harness: dataset generation, training, evaluation,
ablation, gradient verification, similarity analysis, parameter accounting.

Every failure path exits nonzero after printing a single
``scanet: error: <reason>`` line to stderr.
"""

import argparse
import concurrent.futures
import os
import statistics
import subprocess
import sys

import numpy as np

from . import verify
from .attention import block_param_count
from .checkpoint import CheckpointError, load_checkpoint, restore_parameters
from .config import (RunConfig, decoder_config, encoder_config, load_config,
                     run_dtype, save_config, sca_config)
from .data import SceneSpec, generate_to_disk
from .model import (build_model, diagonal_similarity, encoder_forward,
                    model_param_count)
from .netpbm import read_ppm, write_pgm
from .tensor import NonFiniteError, ShapeError, Tensor
from .train import evaluate_model, train_run

VARIANT_ORDER = ("baseline", "sa", "ca", "sca")

EVAL_HEADER = "variant,seed,iou,precision,recall,f1"


class CliError(RuntimeError):
    pass


def _load_cfg(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "data", None):
        cfg.data_root = args.data
    if getattr(args, "out", None):
        cfg.out_root = args.out
    return cfg


def _scene_spec(cfg):
    return SceneSpec(height=cfg.tile, width=cfg.tile)


def cmd_gen(args):
    cfg = _load_cfg(args)
    root = cfg.data_root
    if os.path.exists(os.path.join(root, "manifest.txt")) and not args.force:
        raise CliError(f"dataset already exists at {root!r} (use --force)")
    os.makedirs(root, exist_ok=True)
    generate_to_disk(root, cfg.base_seed, cfg.n_train, cfg.n_val,
                     _scene_spec(cfg))
    print(f"wrote {cfg.n_train} train / {cfg.n_val} val tiles "
          f"({cfg.tile}x{cfg.tile}) under {root}")
    return 0


def _run_dir(cfg, variant, seed):
    return os.path.join(cfg.out_root, f"{variant}_seed{seed}")


def cmd_train(args):
    cfg = _load_cfg(args)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    out_dir = args.run_dir or _run_dir(cfg, cfg.variant, seed)
    if os.path.exists(os.path.join(out_dir, "metrics.csv")) and not args.force:
        raise CliError(f"run output exists at {out_dir!r} (use --force)")
    summary = train_run(cfg, seed, out_dir, log=print)
    print(f"best val IoU {summary['best_iou']:.4f} "
          f"(epoch {summary['best_epoch']}) -> {summary['checkpoint']}")
    return 0


def _restore_model(cfg, ckpt):
    dtype = run_dtype(cfg)
    params = build_model(encoder_config(cfg), decoder_config(cfg), 0, dtype)
    restore_parameters(params.parameters(), load_checkpoint(ckpt))
    return params


def cmd_eval(args):
    cfg = _load_cfg(args)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    ckpt = args.ckpt or os.path.join(_run_dir(cfg, cfg.variant, seed),
                                     "best.ckpt")
    if not os.path.exists(ckpt):
        raise CliError(f"checkpoint not found: {ckpt}")
    params = _restore_model(cfg, ckpt)
    from .data import load_split
    images, masks = load_split(cfg.data_root, args.split, run_dtype(cfg))
    rec = evaluate_model(params, images, masks, cfg.batch_size, cfg.threshold)
    print(f"{args.split}: iou {rec.iou:.4f}  precision {rec.precision:.4f}  "
          f"recall {rec.recall:.4f}  f1 {rec.f1:.4f}  loss {rec.loss:.4f}")
    os.makedirs(cfg.out_root, exist_ok=True)
    csv_path = os.path.join(cfg.out_root, "eval.csv")
    fresh = not os.path.exists(csv_path)
    with open(csv_path, "a") as fh:
        if fresh:
            fh.write(EVAL_HEADER + "\n")
        fh.write(f"{cfg.variant},{seed},{rec.iou!r},{rec.precision!r},"
                 f"{rec.recall!r},{rec.f1!r}\n")
    return 0


def _spawn_cell(cfg, variant, seed, cell_dir, force):
    os.makedirs(cell_dir, exist_ok=True)
    cell_cfg_path = os.path.join(cell_dir, "run.cfg")
    cell = RunConfig(**{f: getattr(cfg, f) for f in cfg.__dataclass_fields__})
    cell.variant = variant
    save_config(cell_cfg_path, cell)
    cmd = [sys.executable, "-m", "scanet.cli", "train",
           "--config", cell_cfg_path, "--run-dir", cell_dir,
           "--seed", str(seed)]
    if force:
        cmd.append("--force")
    env = dict(os.environ)
    env.setdefault("OPENBLAS_NUM_THREADS", "1")
    env.setdefault("OMP_NUM_THREADS", "1")
    env.setdefault("MKL_NUM_THREADS", "1")
    proc = subprocess.run(cmd, capture_output=True, text=True, env=env)
    return proc.returncode, proc.stdout, proc.stderr


def _best_row(metrics_csv):
    with open(metrics_csv) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    iou_i = header.index("iou")
    best = max(rows, key=lambda r: float(r[iou_i]))
    return {k: float(v) for k, v in zip(header, best)}


def cmd_ablate(args):
    cfg = _load_cfg(args)
    variants = [v.strip() for v in args.variants.split(",")] if args.variants \
        else list(VARIANT_ORDER)
    for v in variants:
        if v not in VARIANT_ORDER:
            raise CliError(f"unknown variant {v!r}")
    variants.sort(key=VARIANT_ORDER.index)
    os.makedirs(cfg.out_root, exist_ok=True)
    cells = [(v, s) for v in variants for s in cfg.seeds]
    results = {}
    workers = max(1, args.workers)
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futs = {pool.submit(_spawn_cell, cfg, v, s,
                            os.path.join(cfg.out_root, f"{v}_seed{s}"),
                            args.force): (v, s) for v, s in cells}
        for fut in concurrent.futures.as_completed(futs):
            v, s = futs[fut]
            code, out, err = fut.result()
            results[(v, s)] = code
            if code != 0:
                sys.stderr.write(f"cell {v} seed {s} failed:\n{err}\n")
            else:
                print(f"cell {v} seed {s} done")
    rows = []
    failed = False
    for v in variants:
        for s in cfg.seeds:
            cell_dir = os.path.join(cfg.out_root, f"{v}_seed{s}")
            if results[(v, s)] != 0:
                rows.append((v, s, None))
                failed = True
                continue
            rows.append((v, s, _best_row(os.path.join(cell_dir, "metrics.csv"))))
    csv_path = os.path.join(cfg.out_root, "ablate.csv")
    with open(csv_path, "w") as fh:
        fh.write(EVAL_HEADER + "\n")
        for v, s, r in rows:
            if r is None:
                fh.write(f"{v},{s},failed,failed,failed,failed\n")
            else:
                fh.write(f"{v},{s},{r['iou']!r},{r['precision']!r},"
                         f"{r['recall']!r},{r['f1']!r}\n")
    lines = [f"{'variant':<10}{'params':>10}{'median IoU':>12}{'per-seed IoU':>30}"]
    counts = _variant_param_counts(cfg)
    for v in variants:
        ious = [r["iou"] for (vv, s, r) in rows if vv == v and r is not None]
        med = statistics.median(ious) if ious else float("nan")
        per = " ".join(f"{x:.4f}" for x in ious) or "failed"
        lines.append(f"{v:<10}{counts[v]:>10}{med:>12.4f}{per:>30}")
    table = "\n".join(lines)
    print(table)
    with open(os.path.join(cfg.out_root, "ablate.txt"), "w") as fh:
        fh.write(table + "\n")
    if failed:
        raise CliError("one or more ablation cells failed")
    return 0


def _variant_param_counts(cfg):
    counts = {}
    for v in VARIANT_ORDER:
        params = build_model(encoder_config(cfg, variant=v),
                             decoder_config(cfg), 0, np.float32)
        counts[v] = model_param_count(params)
    return counts


def cmd_gradcheck(args):
    ok = verify.report(seed=args.seed if args.seed is not None else 0)
    if not ok:
        raise CliError("gradient check failed")
    return 0


def cmd_simmatrix(args):
    cfg = _load_cfg(args)
    if not args.ckpt or not os.path.exists(args.ckpt):
        raise CliError(f"checkpoint not found: {args.ckpt}")
    params = _restore_model(cfg, args.ckpt)
    if args.image:
        img = read_ppm(args.image).transpose(2, 0, 1)
    else:
        from .data import load_split
        images, _ = load_split(cfg.data_root, "val", run_dtype(cfg))
        img = (images[0] * 255).astype(np.uint8)
    x = Tensor((img.astype(np.float64) / 255.0)[None].astype(run_dtype(cfg)))
    pyramid = encoder_forward(x, params.encoder)
    if not 1 <= args.stage <= 5:
        raise CliError(f"stage {args.stage} outside 1..5")
    sim = diagonal_similarity(pyramid[args.stage - 1])
    if not np.allclose(sim, sim.T, atol=1e-12):
        raise CliError("similarity matrix failed the symmetry check")
    os.makedirs(cfg.out_root, exist_ok=True)
    pgm = np.floor((sim + 1.0) * 0.5 * 255.0 + 0.5).astype(np.uint8)
    write_pgm(os.path.join(cfg.out_root, "simmatrix.pgm"), pgm)
    with open(os.path.join(cfg.out_root, "simmatrix.csv"), "w") as fh:
        for row in sim:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    print(f"stage {args.stage} diagonal similarity {sim.shape[0]}x{sim.shape[1]} "
          f"-> {cfg.out_root}/simmatrix.pgm,.csv")
    return 0


def cmd_params(args):
    cfg = _load_cfg(args)
    widths = tuple(cfg.widths)
    scfg = sca_config(cfg)
    print(f"{'variant':<10}" + "".join(f"{f'stage{i + 1}':>10}"
                                       for i in range(5)) + f"{'total':>12}")
    for v in VARIANT_ORDER:
        cin = cfg.stem_width
        cells = []
        for w in widths:
            count = block_param_count(v, cin, w, scfg, stride=2)
            for _ in range(cfg.blocks_per_stage - 1):
                count += block_param_count(v, w, w, scfg, stride=1)
            cells.append(count)
            cin = w
        params = build_model(encoder_config(cfg, variant=v),
                             decoder_config(cfg), 0, np.float32)
        total = model_param_count(params)
        print(f"{v:<10}" + "".join(f"{c:>10}" for c in cells) + f"{total:>12}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="scanet",
        description="split coordinate attention segmentation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, run_dir=False):
        p.add_argument("--config", help="run configuration file")
        p.add_argument("--data", help="dataset directory")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--force", action="store_true")
        if run_dir:
            p.add_argument("--run-dir", default=None,
                           help="exact output directory for this run")

    p = sub.add_parser("gen", help="generate the synthetic dataset")
    common(p)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="train one variant/seed")
    common(p, run_dir=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--ckpt", help="checkpoint path (default: run dir best.ckpt)")
    p.add_argument("--split", default="val", choices=("train", "val"))
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="train all variants x seeds and compare")
    common(p)
    p.add_argument("--variants", help="comma list among baseline,sa,ca,sca")
    p.add_argument("--workers", type=int, default=min(2, os.cpu_count() or 1))
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient report")
    common(p)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("simmatrix", help="diagonal similarity of a stage")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", help="input PPM (default: first val tile)")
    p.add_argument("--stage", type=int, default=5)
    p.set_defaults(fn=cmd_simmatrix)

    p = sub.add_parser("params", help="parameter counts per variant")
    common(p)
    p.set_defaults(fn=cmd_params)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CliError, CheckpointError, ShapeError, NonFiniteError,
            FileNotFoundError, ValueError) as exc:
        sys.stderr.write(f"scanet: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
