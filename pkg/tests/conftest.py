import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def micro_cfg_text(tmp_path_factory):
    """A tiny but structurally complete run configuration."""
    root = tmp_path_factory.mktemp("micro")
    return (
        "variant = sca\n"
        "stem_width = 8\n"
        "widths = 8,8,16,16,16\n"
        "decoder_widths = 4,4,4,8\n"
        "batch_size = 8\n"
        "epochs = 2\n"
        "seeds = 5\n"
        "n_train = 24\n"
        "n_val = 8\n"
        f"data_root = {root}/data\n"
        f"out_root = {root}/runs\n"
    )


@pytest.fixture(scope="session")
def micro_env(tmp_path_factory, micro_cfg_text):
    """Config file + generated micro dataset shared across CLI tests."""
    from scanet.cli import main

    d = tmp_path_factory.mktemp("microenv")
    cfg_path = d / "micro.cfg"
    data_root = d / "data"
    # rewrite roots to this fixture's directory
    lines = []
    for line in micro_cfg_text.splitlines():
        if line.startswith("data_root"):
            line = f"data_root = {data_root}"
        if line.startswith("out_root"):
            line = f"out_root = {d}/runs"
        lines.append(line)
    cfg_path.write_text("\n".join(lines) + "\n")
    assert main(["gen", "--config", str(cfg_path)]) == 0
    return {"cfg": str(cfg_path), "dir": d, "data": str(data_root)}
