"""Training and evaluation loops for one run (variant, seed)."""

import os

import numpy as np

from .checkpoint import save_checkpoint
from .config import decoder_config, encoder_config, run_dtype
from .data import child_seed, load_split
from .model import (bce_dice_loss, build_model, lr_schedule_step,
                    metrics_from_counts, model_forward, overlap_counts)
from .optim import AdamW
from .tensor import NonFiniteError, Tape, Tensor, backward

CSV_HEADER = "epoch,train_loss,val_loss,iou,precision,recall,f1,lr"


def _batches(n, size):
    for at in range(0, n, size):
        yield at, min(at + size, n)


def evaluate_model(params, images, masks, batch_size, threshold=0.5):
    """Micro-averaged metrics and mean loss over one split, no recording."""
    tp = fp = fn = 0
    loss_sum = 0.0
    n = images.shape[0]
    for a, b in _batches(n, batch_size):
        x = Tensor(images[a:b])
        t = Tensor(masks[a:b])
        logits = model_forward(x, params)
        loss_sum += bce_dice_loss(logits, t).item() * (b - a)
        probs = _sigmoid_np(logits.data)
        dtp, dfp, dfn = overlap_counts(probs, masks[a:b], threshold)
        tp, fp, fn = tp + dtp, fp + dfp, fn + dfn
    rec = metrics_from_counts(tp, fp, fn, loss=loss_sum / n)
    return rec


def _sigmoid_np(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _fmt(x):
    return repr(float(x))


def train_run(cfg, seed, out_dir, log=None):
    """Train one model; writes metrics.csv and best.ckpt under out_dir.

    Returns a summary dict with the best validation record and paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    dtype = run_dtype(cfg)
    train_x, train_t = load_split(cfg.data_root, "train", dtype)
    val_x, val_t = load_split(cfg.data_root, "val", dtype)

    params = build_model(encoder_config(cfg), decoder_config(cfg), seed, dtype)
    plist = params.parameters()
    opt = AdamW(plist, lr=cfg.lr, weight_decay=cfg.weight_decay)

    metrics_path = os.path.join(out_dir, "metrics.csv")
    ckpt_path = os.path.join(out_dir, "best.ckpt")
    n = train_x.shape[0]
    best_iou, best_epoch = -1.0, -1
    iou_history = []
    gstep = 0
    rows = [CSV_HEADER]
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.Generator(
            np.random.PCG64(child_seed(seed, 100000 + epoch))).permutation(n)
        loss_sum = 0.0
        for a, b in _batches(n, cfg.batch_size):
            idx = order[a:b]
            x = Tensor(train_x[idx])
            t = Tensor(train_t[idx])
            opt.zero_grad()
            with Tape() as tape:
                logits = model_forward(x, params)
                loss = bce_dice_loss(logits, t)
            lv = loss.item()
            gstep += 1
            if not np.isfinite(lv):
                raise NonFiniteError(f"non-finite training loss at step {gstep}")
            backward(tape, loss)
            opt.step()
            loss_sum += lv * (b - a)
        train_loss = loss_sum / n
        rec = evaluate_model(params, val_x, val_t, cfg.batch_size, cfg.threshold)
        rec.epoch = epoch
        iou_history.append(rec.iou)
        if rec.iou > best_iou:
            best_iou, best_epoch = rec.iou, epoch
            save_checkpoint(ckpt_path, plist)
        new_lr = lr_schedule_step(iou_history, opt.lr, cfg.patience)
        rows.append(",".join([str(epoch), _fmt(train_loss), _fmt(rec.loss),
                              _fmt(rec.iou), _fmt(rec.precision),
                              _fmt(rec.recall), _fmt(rec.f1), _fmt(opt.lr)]))
        if log:
            log(f"epoch {epoch:3d}  train_loss {train_loss:.4f}  "
                f"val_loss {rec.loss:.4f}  iou {rec.iou:.4f}  lr {opt.lr:g}")
        opt.lr = new_lr
    with open(metrics_path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
    return {"best_iou": best_iou, "best_epoch": best_epoch,
            "metrics": metrics_path, "checkpoint": ckpt_path}
