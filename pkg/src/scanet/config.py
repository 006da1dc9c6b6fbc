"""Flat `key = value` run configuration with lossless round trip."""

from dataclasses import dataclass, fields

from .attention import SCAConfig
from .model import DecoderConfig, EncoderConfig


@dataclass
class RunConfig:
    variant: str = "sca"
    cardinality: int = 2
    radix: int = 2
    reduction: int = 4
    strip_activation: str = "relu"
    strip_norm: bool = True
    share_splits: bool = False
    stem_width: int = 16
    widths: tuple = (16, 32, 64, 128, 256)
    blocks_per_stage: int = 1
    decoder_depth: int = 3
    decoder_widths: tuple = (8, 12, 24, 48)
    decoder_norm: bool = True
    batch_size: int = 16
    epochs: int = 20
    lr: float = 1e-3
    weight_decay: float = 1e-2
    patience: int = 10
    threshold: float = 0.5
    seeds: tuple = (1, 2, 3)
    base_seed: int = 42
    n_train: int = 2000
    n_val: int = 200
    tile: int = 64
    data_root: str = "data"
    out_root: str = "runs"
    precision: str = "float32"


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text, like):
    if isinstance(like, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean {text!r}")
    if isinstance(like, tuple):
        return tuple(int(x.strip()) for x in text.split(",") if x.strip())
    return type(like)(text)


def format_config(cfg):
    lines = [f"{f.name} = {_format_value(getattr(cfg, f.name))}"
             for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def parse_config(text, base=None):
    cfg = base or RunConfig()
    known = {f.name: f for f in fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _parse_value(val, getattr(RunConfig(), key)))
    return cfg


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def save_config(path, cfg):
    with open(path, "w") as fh:
        fh.write(format_config(cfg))


def sca_config(cfg):
    return SCAConfig(cardinality=cfg.cardinality, radix=cfg.radix,
                     reduction=cfg.reduction,
                     strip_activation=cfg.strip_activation,
                     strip_norm=cfg.strip_norm, share_splits=cfg.share_splits)


def encoder_config(cfg, variant=None):
    return EncoderConfig(stem_width=cfg.stem_width, widths=tuple(cfg.widths),
                         blocks_per_stage=cfg.blocks_per_stage,
                         variant=variant or cfg.variant, sca=sca_config(cfg))


def decoder_config(cfg):
    return DecoderConfig(depth=cfg.decoder_depth,
                         widths=tuple(cfg.decoder_widths),
                         norm=cfg.decoder_norm)


def run_dtype(cfg):
    import numpy as np
    if cfg.precision == "float32":
        return np.float32
    if cfg.precision == "float64":
        return np.float64
    raise ValueError(f"precision must be float32|float64, got {cfg.precision!r}")
