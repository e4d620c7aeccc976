"""Adam optimization and the alternating discriminator / generator loop.

One training step updates the discriminators on detached fakes first, then
the generator (and code generator) on fresh forward passes. Everything is
driven by a single seeded RNG and the full state (parameters, Adam moments,
RNG) serializes, so runs are bit-reproducible and resumable.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import dataio
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, from_checkpoint_dict
from .errors import ContractError, NumericError
from .models import (
    DiscConfig,
    GeneratorConfig,
    build_code_generator,
    build_discriminator,
    build_generator,
)
from .objectives import (
    LossWeights,
    SwitchableTranslator,
    TwinTranslator,
    disc_loss,
    total_gen_loss,
)
from .tensor import Tensor

LOSS_FIELDS = ("disc", "gen_adv", "cycle", "identity", "total")


class Adam:
    """Bias-corrected Adam over a fixed, named parameter set."""

    def __init__(self, named_params: dict[str, Tensor], lr: float,
                 beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-7):
        self.params = dict(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            if self.lr == 0.0:
                continue
            denom = np.sqrt(v / bc2)
            denom += self.eps
            denom /= self.lr / bc1
            p.data -= m / denom

    def moment_tensors(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for name in self.params:
            out[f"{prefix}.m.{name}"] = self.m[name]
            out[f"{prefix}.v.{name}"] = self.v[name]
        return out

    def load_moments(self, tensors: dict[str, np.ndarray], prefix: str, t: int) -> None:
        self.t = int(t)
        for name in self.params:
            self.m[name] = np.array(tensors[f"{prefix}.m.{name}"], dtype=np.float64)
            self.v[name] = np.array(tensors[f"{prefix}.v.{name}"], dtype=np.float64)


class frozen:
    """Context manager that stops gradient accumulation into some models."""

    def __init__(self, *models):
        self._params = [p for m in models for p in m.parameters()]

    def __enter__(self):
        self._saved = [p.requires_grad for p in self._params]
        for p in self._params:
            p.requires_grad = False
        return self

    def __exit__(self, *exc):
        for p, flag in zip(self._params, self._saved):
            p.requires_grad = flag
        return False


def sample_patch(pool: list[np.ndarray], rng: np.random.Generator,
                 patch_size: int, flip: bool = True) -> Tensor:
    """Random crop of a random pool image, with independent H/V flips."""
    img = pool[int(rng.integers(len(pool)))]
    h, w = img.shape
    if h < patch_size or w < patch_size:
        raise ContractError(f"image {img.shape} smaller than patch size {patch_size}")
    oy = int(rng.integers(h - patch_size + 1))
    ox = int(rng.integers(w - patch_size + 1))
    crop = img[oy:oy + patch_size, ox:ox + patch_size]
    if flip:
        if rng.random() < 0.5:
            crop = crop[::-1, :]
        if rng.random() < 0.5:
            crop = crop[:, ::-1]
    return Tensor(np.ascontiguousarray(crop)[:, :, None])


def sample_patch_pair(pool_x: list[np.ndarray], pool_y: list[np.ndarray],
                      rng: np.random.Generator, patch_size: int,
                      flip: bool = True) -> tuple[Tensor, Tensor]:
    px = sample_patch(pool_x, rng, patch_size, flip)
    py = sample_patch(pool_y, rng, patch_size, flip)
    return px, py


@dataclass
class TrainState:
    """Everything a run needs to continue exactly where it stopped."""

    config: RunConfig
    translator: object
    d_x: object
    d_y: object
    adam_gen: Adam
    adam_dx: Adam
    adam_dy: Adam
    rng: np.random.Generator
    epoch: int = 0
    weights: LossWeights = field(default_factory=LossWeights)

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for name, p in self.translator.named_gen_parameters().items():
            out[name] = p.data
        for name, p in self.d_x.params.items():
            out[f"DX.{name}"] = p.data
        for name, p in self.d_y.params.items():
            out[f"DY.{name}"] = p.data
        out.update(self.adam_gen.moment_tensors("adam_gen"))
        out.update(self.adam_dx.moment_tensors("adam_dx"))
        out.update(self.adam_dy.moment_tensors("adam_dy"))
        return out

    def save(self, path) -> None:
        meta = {
            "kind": "train_state",
            "run": self.config.to_model_dict(),
            "epoch": self.epoch,
            "adam_t": {"gen": self.adam_gen.t, "dx": self.adam_dx.t, "dy": self.adam_dy.t},
            "rng": _rng_state_to_json(self.rng),
        }
        save_checkpoint(path, meta, self.named_tensors())


def _rng_state_to_json(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return {
        "bit_generator": state["bit_generator"],
        "state": {"state": str(state["state"]["state"]), "inc": str(state["state"]["inc"])},
        "has_uint32": state["has_uint32"],
        "uinteger": state["uinteger"],
    }


def _rng_state_from_json(blob: dict) -> np.random.Generator:
    rng = np.random.default_rng(0)
    rng.bit_generator.state = {
        "bit_generator": blob["bit_generator"],
        "state": {"state": int(blob["state"]["state"]), "inc": int(blob["state"]["inc"])},
        "has_uint32": blob["has_uint32"],
        "uinteger": blob["uinteger"],
    }
    return rng


def model_seeds(seed: int) -> dict[str, np.random.SeedSequence]:
    """Fixed seed tree: model inits and the data stream never interleave,
    so the twin baseline sees the same patch sequence as the switchable
    model under a matched seed."""
    children = np.random.SeedSequence(seed).spawn(6)
    return {
        "G": children[0], "F": children[1], "G2": children[2],
        "DX": children[3], "DY": children[4], "data": children[5],
    }


def generator_config(cfg: RunConfig) -> GeneratorConfig:
    return GeneratorConfig(stages=cfg.stages, base_channels=cfg.base_channels,
                           adain_eps=cfg.adain_eps)


def build_translator(cfg: RunConfig, seeds: dict):
    gen_cfg = generator_config(cfg)
    if cfg.arch == "switchable":
        g = build_generator(gen_cfg, np.random.default_rng(seeds["G"]))
        f = build_code_generator(gen_cfg, np.random.default_rng(seeds["F"]))
        return SwitchableTranslator(g, f, gen_cfg)
    g_yx = build_generator(gen_cfg, np.random.default_rng(seeds["G"]))
    g_xy = build_generator(gen_cfg, np.random.default_rng(seeds["G2"]))
    return TwinTranslator(g_yx, g_xy)


def build_train_state(cfg: RunConfig) -> TrainState:
    cfg.validate()
    seeds = model_seeds(cfg.seed)
    translator = build_translator(cfg, seeds)
    disc_cfg = DiscConfig(base_channels=cfg.disc_base_channels)
    d_x = build_discriminator(disc_cfg, np.random.default_rng(seeds["DX"]))
    d_y = build_discriminator(disc_cfg, np.random.default_rng(seeds["DY"]))
    weights = LossWeights(lambda_cyc=cfg.lambda_cyc, lambda_id=cfg.lambda_id,
                          gan_mode=cfg.gan_mode)
    lr = cfg.learning_rate
    return TrainState(
        config=cfg,
        translator=translator,
        d_x=d_x,
        d_y=d_y,
        adam_gen=Adam(translator.named_gen_parameters(), lr),
        adam_dx=Adam(d_x.params, lr),
        adam_dy=Adam(d_y.params, lr),
        rng=np.random.default_rng(seeds["data"]),
        weights=weights,
    )


def load_train_state(path, dataset_dir: str = "", out_dir: str = "") -> TrainState:
    meta, tensors = load_checkpoint(path)
    if meta.get("kind") != "train_state":
        raise ContractError(f"{path} is not a training checkpoint")
    cfg = from_checkpoint_dict(meta["run"]).replace(dataset_dir=dataset_dir, out_dir=out_dir)
    state = build_train_state(cfg)
    for name, p in state.translator.named_gen_parameters().items():
        p.data = np.array(tensors[name], dtype=np.float64)
        p.zero_grad()
    state.d_x.load_values(tensors, prefix="DX.")
    state.d_y.load_values(tensors, prefix="DY.")
    state.adam_gen.load_moments(tensors, "adam_gen", meta["adam_t"]["gen"])
    state.adam_dx.load_moments(tensors, "adam_dx", meta["adam_t"]["dx"])
    state.adam_dy.load_moments(tensors, "adam_dy", meta["adam_t"]["dy"])
    state.rng = _rng_state_from_json(meta["rng"])
    state.epoch = int(meta["epoch"])
    return state


def train_step(state: TrainState, batch_x: list[Tensor], batch_y: list[Tensor]) -> dict[str, float]:
    """One alternating update: discriminators first, then generator side."""
    mode = state.weights.gan_mode
    # discriminator phase: generator side frozen, so the fake forwards
    # stay off the tape and no gradient can touch G or F
    state.adam_dx.zero_grad()
    state.adam_dy.zero_grad()
    with frozen(*state.translator.models().values()):
        d_loss = disc_loss(state.d_x, state.d_y, state.translator, batch_x, batch_y, mode)
        if not math.isfinite(d_loss.item()):
            raise NumericError("discriminator loss is not finite")
        d_loss.backward()
    state.adam_dx.step()
    state.adam_dy.step()

    # generator phase on fresh forward passes, discriminators frozen
    state.adam_gen.zero_grad()
    with frozen(state.d_x, state.d_y):
        total, parts = total_gen_loss(state.d_x, state.d_y, state.translator,
                                      batch_x, batch_y, state.weights)
        if not math.isfinite(total.item()):
            raise NumericError("generator loss is not finite")
        total.backward()
    state.adam_gen.step()

    record = {"disc": d_loss.item(), **parts, "total": total.item()}
    return record


def load_pools(cfg: RunConfig) -> dataio.DatasetPools:
    manifest = os.path.join(cfg.dataset_dir, "train", "manifest.tsv")
    records = dataio.load_records(manifest)
    seeds = model_seeds(cfg.seed)
    shuffle_rng = np.random.default_rng(seeds["data"].spawn(1)[0])
    pools = dataio.prepare_pools(records, cfg.levels, wavelet=cfg.wavelet, rng=shuffle_rng)
    if cfg.train_fraction < 1.0:
        kx = max(1, int(round(cfg.train_fraction * len(pools.pool_x))))
        ky = max(1, int(round(cfg.train_fraction * len(pools.pool_y))))
        pools = dataio.DatasetPools(
            pool_x=pools.pool_x[:kx], pool_y=pools.pool_y[:ky],
            ids_x=pools.ids_x[:kx], ids_y=pools.ids_y[:ky])
    return pools


def fit(cfg: RunConfig, pools: dataio.DatasetPools | None = None,
        resume_from: str | None = None, progress=None) -> TrainState:
    """Run the full training loop; writes one checkpoint per epoch plus an
    append-only loss log under cfg.out_dir."""
    cfg.validate()
    if pools is None:
        pools = load_pools(cfg)
    if resume_from:
        state = load_train_state(resume_from, dataset_dir=cfg.dataset_dir, out_dir=cfg.out_dir)
        saved = dict(state.config.to_model_dict(), epochs=None)
        current = dict(cfg.to_model_dict(), epochs=None)
        if saved != current:
            diff = sorted(k for k in current if saved.get(k) != current[k])
            raise ContractError(f"checkpoint/config mismatch on keys {diff}")
        state.config = cfg
    else:
        state = build_train_state(cfg)

    os.makedirs(cfg.out_dir, exist_ok=True)
    log_path = os.path.join(cfg.out_dir, "loss_log.tsv")
    steps_per_epoch = max(1, min(len(pools.pool_x), len(pools.pool_y)) // cfg.batch_size)
    step = state.epoch * steps_per_epoch

    while state.epoch < cfg.epochs:
        lines = []
        for _ in range(steps_per_epoch):
            batch_x, batch_y = [], []
            for _ in range(cfg.batch_size):
                px, py = sample_patch_pair(pools.pool_x, pools.pool_y, state.rng,
                                           cfg.patch_size, flip=cfg.flip_augment)
                batch_x.append(px)
                batch_y.append(py)
            record = train_step(state, batch_x, batch_y)
            step += 1
            lines.append(f"{step}\t" + "\t".join(f"{record[k]:.17g}" for k in LOSS_FIELDS))
        with open(log_path, "a", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        state.epoch += 1
        state.save(os.path.join(cfg.out_dir, f"ckpt_ep{state.epoch:03d}.bin"))
        if progress is not None:
            progress(state.epoch, record)
    return state
