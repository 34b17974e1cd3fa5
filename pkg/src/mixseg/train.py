"""Training loop, evaluation and single-image inference.

Training follows a fixed-epoch recipe: per step a batch is drawn from a
seeded shuffle, every sample is resized to the square training size, an
optional multi-scale factor (rounded to a multiple of 32) rescales the
whole batch, and the deep-supervision loss averaged over the batch drives
one AdamW update. With a fixed seed the whole train/evaluate pipeline is
bitwise reproducible, and resuming from a checkpoint reproduces the
uninterrupted run exactly.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from . import metrics as M
from . import tensor as T
from .checkpoint import Checkpoint, save_checkpoint
from .config import ModelConfig, TrainConfig
from .data import Sample
from .depth import DepthMap, load_depth, replicate3, stub_depth, zero_depth
from .imgio import load_image_rgb, save_gray_png
from .loss import resize_target, total_loss
from .model import MIN_SIDE, Model, build, forward
from .optim import OptState, adamw_step
from .tensor import Tensor, backward


class TrainingDivergedError(RuntimeError):
    """The loss went non-finite; the message names the offending batch."""


def _round32(value: float) -> int:
    return max(MIN_SIDE, int(value / 32.0 + 0.5) * 32)


def _resize_stack(arr: np.ndarray, h: int, w: int) -> np.ndarray:
    return T.bilinear_resize(Tensor(arr), h, w).data


def _prepare(sample: Sample, size: int, no_dam: bool
             ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    image = _resize_stack(sample.image, size, size)
    mask = resize_target(sample.mask, size, size)
    if no_dam:
        depth3 = np.zeros((3, size, size))
    else:
        depth3 = replicate3(DepthMap(
            values=_resize_stack(sample.depth.values, size, size),
            source=sample.depth.source))
    return image, mask, depth3


def _rescale(prepared, size: int):
    image, mask, depth3 = prepared
    if image.shape[1] == size:
        return prepared
    return (_resize_stack(image, size, size),
            resize_target(mask, size, size),
            _resize_stack(depth3, size, size))


def train(samples: list[Sample], train_config: TrainConfig,
          model_config: ModelConfig, *, out_path=None,
          resume: Checkpoint | None = None, progress=None
          ) -> tuple[Checkpoint, dict]:
    """Run the optimization recipe; returns the final checkpoint and a
    history dict with per-epoch losses and instrumentation counters."""
    if not samples:
        raise ValueError("train: empty sample list")
    n = len(samples)
    batch_size = train_config.batch_size
    if batch_size > n:
        warnings.warn(f"batch_size {batch_size} exceeds dataset size {n}; "
                      f"clamping to {n}")
        batch_size = n

    if resume is not None:
        if resume.model_config != model_config:
            raise ValueError("resume: checkpoint was built with a different "
                             "model configuration")
        model = resume.model()
        opt = OptState(m={k: a.copy() for k, a in resume.opt.m.items()},
                       v={k: a.copy() for k, a in resume.opt.v.items()},
                       step=resume.opt.step)
        start_epoch = resume.epoch
        rng = np.random.default_rng()
        rng.bit_generator.state = resume.rng_state
    else:
        model = build(model_config)
        opt = OptState.for_params(model.params)
        start_epoch = 0
        rng = np.random.default_rng(train_config.seed)

    base = [_prepare(s, train_config.train_size, train_config.no_dam)
            for s in samples]
    factors = train_config.multiscale_factors
    history: dict = {"epoch_loss": [], "scale_draws": 0, "steps": 0}

    def snapshot(epoch: int) -> Checkpoint:
        return Checkpoint(model_config=model_config,
                          params={k: a.copy() for k, a in model.params.items()},
                          opt=OptState(m={k: a.copy() for k, a in opt.m.items()},
                                       v={k: a.copy() for k, a in opt.v.items()},
                                       step=opt.step),
                          epoch=epoch, rng_state=rng.bit_generator.state)

    ckpt = snapshot(start_epoch)
    for epoch in range(start_epoch, train_config.epochs):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, batch_size):
            batch_ids = [samples[i].id for i in order[lo:lo + batch_size]]
            batch = [base[i] for i in order[lo:lo + batch_size]]
            size = train_config.train_size
            if not train_config.no_multiscale:
                factor = factors[rng.integers(len(factors))]
                history["scale_draws"] += 1
                if factor != 1.0:
                    size = _round32(train_config.train_size * factor)
            batch = [_rescale(item, size) for item in batch]

            ptensors = model.param_tensors()
            loss_sum = None
            for image, mask, depth3 in batch:
                masks = forward(ptensors, model_config, Tensor(image),
                                Tensor(depth3))
                term = total_loss(masks, mask)
                loss_sum = term if loss_sum is None else T.add(loss_sum, term)
            loss = T.affine(loss_sum, 1.0 / len(batch))
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss {value} at epoch {epoch + 1}, "
                    f"batch ids {batch_ids}")
            backward(loss)
            grads = {name: (t.grad if t.grad is not None
                            else np.zeros(t.shape))
                     for name, t in ptensors.items()}
            adamw_step(model.params, grads, opt, train_config)
            history["steps"] += 1
            losses.append(value)
        epoch_loss = float(np.mean(losses))
        history["epoch_loss"].append(epoch_loss)
        if progress is not None:
            progress(f"epoch {epoch + 1}/{train_config.epochs} "
                     f"loss {epoch_loss:.6f}")
        ckpt = snapshot(epoch + 1)
        periodic = (train_config.checkpoint_every > 0
                    and (epoch + 1) % train_config.checkpoint_every == 0)
        if out_path is not None and (periodic or epoch + 1 == train_config.epochs):
            save_checkpoint(out_path, ckpt)
    return ckpt, history


def evaluate(model: Model, samples: list[Sample], threshold: float = 0.5,
             no_dam: bool = False) -> tuple[M.MetricReport, list[dict]]:
    """Score the model on samples at their native resolution.

    Predictions are resized to the ground-truth resolution when they
    differ. Aggregation runs in sorted-id order; the model is not mutated.
    """
    rows = []
    pairs = []
    for sample in sorted(samples, key=lambda s: s.id):
        h, w = sample.image.shape[1:]
        if h < MIN_SIDE or w < MIN_SIDE:
            raise ValueError(f"{sample.id}: image {h}x{w} is below the "
                             f"minimum evaluable side {MIN_SIDE}")
        if no_dam:
            depth3 = np.zeros_like(sample.image)
        else:
            depth3 = replicate3(sample.depth)
        native = model.forward(Tensor(sample.image), Tensor(depth3))[0]
        pred = native.data
        if pred.shape[1:] != sample.mask.shape[1:]:
            pred = _resize_stack(pred, sample.mask.shape[1],
                                 sample.mask.shape[2])
        pred = np.clip(pred, 0.0, 1.0)
        row = M.per_image_metrics(pred[0], sample.mask[0], threshold)
        row["id"] = sample.id
        rows.append(row)
        pairs.append((pred[0], sample.mask[0]))
    report = M.evaluate_dataset(pairs, threshold)
    return report, rows


def infer(model: Model, image_path, out_path, *, depth_path=None,
          use_zero_depth: bool = False, threshold: float | None = None,
          binary_out=None) -> np.ndarray:
    """Segment one image and write the probability mask as an 8-bit PNG.

    Depth comes from ``depth_path`` when given, else zeros when
    ``use_zero_depth``, else the luminance stub. A depth file whose size
    differs from the image is rejected, never silently resized.
    """
    image = load_image_rgb(image_path)
    h, w = image.shape[1:]
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ValueError(f"image {h}x{w} is below the minimum side {MIN_SIDE}")
    if depth_path is not None:
        dmap = load_depth(depth_path)
        if dmap.shape != (h, w):
            raise ValueError(f"depth {dmap.shape} does not match image "
                             f"({h}, {w})")
    elif use_zero_depth:
        dmap = zero_depth(h, w)
    else:
        dmap = stub_depth(image)
    native = model.forward(Tensor(image), Tensor(replicate3(dmap)))[0]
    prob = np.clip(native.data[0], 0.0, 1.0)
    save_gray_png(out_path, prob)
    if binary_out is not None:
        thr = 0.5 if threshold is None else threshold
        save_gray_png(binary_out, (prob >= thr).astype(np.float64))
    return prob


def precompute_depths(root_dir, source, progress=None) -> list[Path]:
    """Run an external depth tool over images/ and fill depths/."""
    root = Path(root_dir)
    images_dir = root / "images"
    depths_dir = root / "depths"
    depths_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for image_path in sorted(images_dir.iterdir()):
        if image_path.suffix.lower() not in (".png", ".jpg", ".jpeg", ".bmp"):
            continue
        out = depths_dir / f"{image_path.stem}.png"
        if out.exists():
            continue
        source.render_to(image_path, out)
        written.append(out)
        if progress is not None:
            progress(f"depth: {image_path.name} -> {out.name}")
    return written
