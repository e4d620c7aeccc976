import os
import time

# pin BLAS threads before numpy loads anywhere: keeps runs bit-reproducible
# and timing honest about the single-core budget
for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest

from switchgan import dataio
from switchgan.config import RunConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Desk-scale setup for acceptance criteria 6-8: base-16 model on 64x64
# synthetic phantoms, single core, well under the 10-minute budget.
DESK_CFG = RunConfig(
    seed=7,
    train_pairs=150,
    eval_pairs=20,
    image_size=64,
    noise_sigma=120.0,
    hd_noise_sigma=0.0,
    learning_rate=2e-3,
    patch_size=16,
    epochs=30,
    lambda_cyc=10.0,
    lambda_id=5.0,
)

# Reduced setup for the criterion-9 data-efficiency grid (6 training runs
# per seed, 3 seeds).
ABLATE_CFG = RunConfig(
    train_pairs=80,
    eval_pairs=10,
    image_size=64,
    noise_sigma=120.0,
    hd_noise_sigma=0.0,
    learning_rate=2e-3,
    patch_size=16,
    epochs=15,
    lambda_cyc=10.0,
    lambda_id=5.0,
)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """One desk-scale training run shared by acceptance criteria 6-8."""
    from switchgan.cli import evaluate_checkpoint, load_denoiser
    from switchgan.trainer import fit

    root = tmp_path_factory.mktemp("desk")
    data = root / "data"
    out = root / "run"
    cfg = DESK_CFG.replace(dataset_dir=str(data), out_dir=str(out))
    dataio.generate_dataset(str(data), seed=cfg.seed, n_train=cfg.train_pairs,
                            n_eval=cfg.eval_pairs, size=cfg.image_size,
                            noise_sigma=cfg.noise_sigma,
                            hd_noise_sigma=cfg.hd_noise_sigma,
                            psf_sigma=cfg.psf_sigma,
                            levels=cfg.levels, wavelet=cfg.wavelet)
    t0 = time.perf_counter()
    state = fit(cfg)
    elapsed = time.perf_counter() - t0
    ckpt = str(out / f"ckpt_ep{state.epoch:03d}.bin")
    generator, _, _, _ = load_denoiser(ckpt)
    pairs = dataio.paired_records(
        dataio.load_records(data / "eval" / "manifest.tsv"))
    return {
        "cfg": cfg,
        "ckpt": ckpt,
        "elapsed": elapsed,
        "generator": generator,
        "pairs": pairs,
        "report": evaluate_checkpoint(ckpt, str(data)),
    }


@pytest.fixture(scope="session")
def ablate_cfg():
    return ABLATE_CFG
