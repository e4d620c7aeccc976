"""Single batch-mode executable covering the whole workflow:

    synth        write a synthetic phantom dataset
    train        run the alternating adversarial training loop
    denoise      apply a trained checkpoint to one image
    switch-demo  emit both translation directions for the same input
    params       print the parameter-count table
    eval         score a checkpoint on an eval split
    ablate       data-efficiency grid vs the two-generator baseline

Flags mirror the config keys (``--key value``); ``--config path`` loads a
key = value file first and flags override it.
"""

from __future__ import annotations

import os

# keep BLAS single threaded before numpy loads: runs stay bit-reproducible
# and honest about the single-core budget
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import dataclasses
import hashlib
import sys

import numpy as np

from . import dataio, metrics
from .checkpoint import load_checkpoint
from .config import RunConfig, apply_overrides, format_config, from_checkpoint_dict, load_config
from .errors import ConfigError, ContractError, FormatError, NumericError
from .models import build_generator, constant_code, param_count
from .tensor import Tensor, no_grad
from .trainer import fit, generator_config, load_train_state, model_seeds
from .wavelet import highfreq_extract, recompose_denoised


# -- inference pipeline -----------------------------------------------------------


def denoise_pixels(generator, cfg: RunConfig, pixels: np.ndarray) -> np.ndarray:
    """normalize -> high-frequency extract -> G(.; constant code) ->
    recompose -> de-normalize. The code generator plays no part here."""
    norm = dataio.normalize_intensity(pixels)
    hf = highfreq_extract(norm, cfg.levels, cfg.wavelet)
    with no_grad():
        out = generator.forward(Tensor(hf[:, :, None]), constant_code(generator.cfg))
    denoised_norm = recompose_denoised(norm, hf, out.data[:, :, 0])
    return denoised_norm * dataio.INTENSITY_DIVISOR


def translate_pixels(translator, cfg: RunConfig, pixels: np.ndarray,
                     direction: str) -> np.ndarray:
    """Full-image translation through the wavelet residual pipeline."""
    norm = dataio.normalize_intensity(pixels)
    hf = highfreq_extract(norm, cfg.levels, cfg.wavelet)
    with no_grad():
        mapper = translator.to_x if direction == "to_x" else translator.to_y
        out = mapper(Tensor(hf[:, :, None]))
    return recompose_denoised(norm, hf, out.data[:, :, 0]) * dataio.INTENSITY_DIVISOR


def hf_std(pixels: np.ndarray, cfg: RunConfig) -> float:
    """Reference-free noise-level proxy: std of the wavelet HF component."""
    return float(highfreq_extract(dataio.normalize_intensity(pixels),
                                  cfg.levels, cfg.wavelet).std())


def load_denoiser(checkpoint_path):
    """Build the inference generator from a checkpoint, loading only the
    baseline U-Net tensors (never the code generator's)."""
    meta, tensors = load_checkpoint(checkpoint_path)
    if meta.get("kind") != "train_state":
        raise ContractError(f"{checkpoint_path} is not a training checkpoint")
    cfg = from_checkpoint_dict(meta["run"])
    prefix = "G." if cfg.arch == "switchable" else "GYX."
    generator = build_generator(generator_config(cfg), np.random.default_rng(0))
    generator.load_values(tensors, prefix=prefix)
    loaded = sorted(prefix + name for name in generator.params)
    digest = hashlib.sha256()
    for name in loaded:
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(tensors[name], dtype="<f8").tobytes())
    return generator, cfg, loaded, digest.hexdigest()


def evaluate_checkpoint(checkpoint_path: str, dataset_dir: str) -> metrics.EvalReport:
    generator, cfg, _, _ = load_denoiser(checkpoint_path)
    records = dataio.load_records(os.path.join(dataset_dir, "eval", "manifest.tsv"))
    pairs = dataio.paired_records(records)
    rows = []
    for clean, noisy in pairs:
        denoised = denoise_pixels(generator, cfg, noisy.pixels)
        stem = clean.id.rpartition("_")[0]
        rows.append(metrics.score_pair(clean.pixels, noisy.pixels, denoised, stem))
    return metrics.EvalReport(rows=rows, config=cfg.to_model_dict())


# -- config plumbing ---------------------------------------------------------------


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="key = value config file")
    for f in dataclasses.fields(RunConfig):
        parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}",
                            metavar="V", default=None, help=argparse.SUPPRESS)


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, base=cfg)
    overrides = {}
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f"cfg_{f.name}", None)
        if value is not None:
            overrides[f.name] = value
    return apply_overrides(cfg, overrides).validate()


def _archive_config(cfg: RunConfig, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "run_config.cfg"), "w", encoding="utf-8") as f:
        f.write(format_config(cfg))


def _require(cfg_value: str, flag: str) -> str:
    if not cfg_value:
        raise ConfigError(f"{flag} is required")
    return cfg_value


# -- commands ----------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _resolve_config(args)
    out_dir = _require(cfg.out_dir, "--out-dir")
    dataio.generate_dataset(
        out_dir, seed=cfg.seed, n_train=cfg.train_pairs, n_eval=cfg.eval_pairs,
        size=cfg.image_size, noise_sigma=cfg.noise_sigma,
        hd_noise_sigma=cfg.hd_noise_sigma, noise_ll_fraction=cfg.noise_ll_fraction,
        psf_sigma=cfg.psf_sigma, levels=cfg.levels, wavelet=cfg.wavelet)
    _archive_config(cfg, out_dir)
    print(f"wrote {cfg.train_pairs} train pairs and {cfg.eval_pairs} eval pairs to {out_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    _require(cfg.dataset_dir, "--dataset-dir")
    out_dir = _require(cfg.out_dir, "--out-dir")
    _archive_config(cfg, out_dir)

    def progress(epoch, record):
        print(f"epoch {epoch:3d}/{cfg.epochs}  "
              + "  ".join(f"{k}={record[k]:.4f}" for k in ("disc", "gen_adv", "cycle", "identity")))

    state = fit(cfg, resume_from=args.resume, progress=progress)
    print(f"finished: {state.epoch} epochs, checkpoints in {out_dir}")
    return 0


def cmd_denoise(args) -> int:
    generator, cfg, loaded, digest = load_denoiser(args.checkpoint)
    pixels = dataio.read_image(args.input)
    denoised = denoise_pixels(generator, cfg, pixels)
    dataio.write_image(args.output, denoised)
    with open(args.output + ".cfg", "w", encoding="utf-8") as f:
        f.write(format_config(cfg))
    if args.export_pgm:
        dataio.export_gray(args.export_pgm, denoised, window=tuple(args.window))
    print(f"loaded {len(loaded)} generator tensors (sha256 {digest[:16]})")
    print(f"wrote {args.output}")
    return 0


def cmd_switch_demo(args) -> int:
    state = load_train_state(args.checkpoint)
    cfg = state.config
    if cfg.arch != "switchable":
        raise ContractError("switch-demo needs a switchable-architecture checkpoint")
    os.makedirs(args.out_dir, exist_ok=True)
    _archive_config(cfg, args.out_dir)
    pixels = dataio.read_image(args.input)
    to_x = translate_pixels(state.translator, cfg, pixels, "to_x")
    to_y = translate_pixels(state.translator, cfg, pixels, "to_y")
    dataio.write_image(os.path.join(args.out_dir, "to_x.img"), to_x)
    dataio.write_image(os.path.join(args.out_dir, "to_y.img"), to_y)
    print(f"hf_std input          = {hf_std(pixels, cfg):.6f}")
    print(f"hf_std denoise  (c_x) = {hf_std(to_x, cfg):.6f}")
    print(f"hf_std noise    (F(c))= {hf_std(to_y, cfg):.6f}")
    return 0


def cmd_params(args) -> int:
    cfg = _resolve_config(args)
    seeds = model_seeds(cfg.seed)
    from .models import build_code_generator  # local: only this command needs F alone

    gen_cfg = generator_config(cfg)
    g = build_generator(gen_cfg, np.random.default_rng(seeds["G"]))
    f = build_code_generator(gen_cfg, np.random.default_rng(seeds["F"]))
    n_g, n_f = param_count(g), param_count(f)
    print("network            parameters")
    print(f"G (switchable)     {n_g:>12,}")
    print(f"F (code gen)       {n_f:>12,}")
    print(f"G + F              {n_g + n_f:>12,}")
    print(f"2G (two-gen base)  {2 * n_g:>12,}")
    print(f"ratio (G+F)/(2G) = {(n_g + n_f) / (2 * n_g):.4f}")
    print(f"ratio F/G        = {n_f / n_g:.4f}")
    return 0


def cmd_eval(args) -> int:
    report = evaluate_checkpoint(args.checkpoint, args.dataset_dir)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "report.tsv"), "w", encoding="utf-8") as f:
        f.write(report.to_tsv())
    with open(os.path.join(args.out_dir, "report.kv"), "w", encoding="utf-8") as f:
        f.write(report.to_kv())
    with open(os.path.join(args.out_dir, "run_config.cfg"), "w", encoding="utf-8") as f:
        f.write(format_config(from_checkpoint_dict(report.config)))
    print(report.to_kv(), end="")
    return 0


ABLATE_FRACTIONS = (1.0, 0.5, 0.1)


def run_ablation(cfg: RunConfig) -> list[dict]:
    """Train switchable and two-generator variants on nested data fractions
    (matched seeds) and score each on the shared eval split."""
    dataset_dir = cfg.dataset_dir
    if not dataset_dir:
        dataset_dir = os.path.join(cfg.out_dir, "dataset")
        if not os.path.isdir(os.path.join(dataset_dir, "train")):
            dataio.generate_dataset(
                dataset_dir, seed=cfg.seed, n_train=cfg.train_pairs, n_eval=cfg.eval_pairs,
                size=cfg.image_size, noise_sigma=cfg.noise_sigma,
                hd_noise_sigma=cfg.hd_noise_sigma, noise_ll_fraction=cfg.noise_ll_fraction,
                psf_sigma=cfg.psf_sigma, levels=cfg.levels, wavelet=cfg.wavelet)
    grid = []
    for arch in ("switchable", "twin"):
        for fraction in ABLATE_FRACTIONS:
            run_dir = os.path.join(cfg.out_dir, f"{arch}_f{int(round(fraction * 100)):03d}")
            run_cfg = cfg.replace(arch=arch, train_fraction=fraction,
                                  dataset_dir=dataset_dir, out_dir=run_dir)
            state = fit(run_cfg)
            ckpt = os.path.join(run_dir, f"ckpt_ep{state.epoch:03d}.bin")
            report = evaluate_checkpoint(ckpt, dataset_dir)
            grid.append({"arch": arch, "fraction": fraction,
                         "psnr": report.mean("psnr_out"), "ssim": report.mean("ssim_out")})
    return grid


def format_ablation(grid: list[dict]) -> str:
    lines = ["arch\tfraction\tpsnr\tssim"]
    for cell in grid:
        lines.append(f"{cell['arch']}\t{cell['fraction']:.2f}\t"
                     f"{cell['psnr']:.4f}\t{cell['ssim']:.4f}")
    by_arch = {arch: {c["fraction"]: c for c in grid if c["arch"] == arch}
               for arch in ("switchable", "twin")}
    for arch, cells in by_arch.items():
        drop = cells[1.0]["psnr"] - cells[0.1]["psnr"]
        lines.append(f"# {arch} psnr drop 100%->10%: {drop:.4f} dB")
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    _require(cfg.out_dir, "--out-dir")
    _archive_config(cfg, cfg.out_dir)
    grid = run_ablation(cfg)
    text = format_ablation(grid)
    with open(os.path.join(cfg.out_dir, "ablation.tsv"), "w", encoding="utf-8") as f:
        f.write(text)
    print(text, end="")
    return 0


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchgan", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic phantom dataset")
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a prepared dataset")
    _add_config_flags(p)
    p.add_argument("--resume", metavar="CKPT", default=None,
                   help="continue from a training checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="denoise one image with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--export-pgm", default=None, metavar="PATH",
                   help="also write an 8-bit windowed PGM preview")
    p.add_argument("--window", nargs=2, type=float, default=(-500.0, 500.0),
                   metavar=("LO", "HI"), help="display window for the PGM export")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("switch-demo", help="run both directions on one input")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_switch_demo)

    p = sub.add_parser("params", help="print the parameter-count table")
    _add_config_flags(p)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("eval", help="score a checkpoint on an eval split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="data-efficiency grid vs the twin baseline")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3
    except (FormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
