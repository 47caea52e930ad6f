"""Rate-distortion loss, Adam, and the three-stage training schedule.

Stage 1 trains everything except the rate banks, sending the semantic
features across the channel analog at full dimension. Stage 2 freezes
those weights and trains only the banks and rate tokens through the
full variable-rate path. Stage 3 fine-tunes all parameters under a
polynomial learning-rate decay. Every batch samples one SNR from the
training set and runs the conventional branch for real (no gradients),
so the decoder sees genuinely corrupted reconstructions at low SNR.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import autodiff as ad
from . import rate
from .autodiff import Tensor
from .channel import snr_to_sigma2
from .encoder import batch_to_tensor
from .pipeline import (
    ModelConfig,
    PipelineConfig,
    SemanticModel,
    _send_conventional,
    load_code,
    split_source,
)
from .rng import make_rng

TRAIN_SNRS_DB = (2.0, 4.0, 6.0, 8.0, 10.0, 12.0)


@dataclass(frozen=True)
class TrainConfig:
    stage: int
    steps: int = 200
    batch_size: int = 4
    lr: float = 1e-3
    poly_power: float = 0.9
    betas: tuple = (0.9, 0.999)
    snr_set: tuple = TRAIN_SNRS_DB
    flip_h: bool = True
    flip_v: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise ValueError(f"stage must be 1, 2, or 3, got {self.stage}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


class Adam:
    """Standard Adam with bias correction; lr is mutable for schedules."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def poly_lr(base: float, step: int, total: int, power: float = 0.9) -> float:
    """base * (1 - step/total)^power; zero at the final boundary."""
    return base * (1.0 - step / total) ** power


def rd_loss(x, x_hat, s_tilde, r_tilde, mu, sigma, model, lambda1):
    """MSE on the 0..255 pixel scale plus lambda1 * bits, per image."""
    err = (x_hat - x) * 255.0
    mse = (err * err).mean()
    if lambda1 == 0.0:
        return mse
    bits = rate.rate_term(s_tilde, r_tilde, mu, sigma, model.prior)
    return mse + (lambda1 / x.data.shape[0]) * bits


def send_analog(vec: Tensor, power: float, noise: np.ndarray) -> Tensor:
    """Differentiable analog channel for one feature vector.

    Pairs reals into complex symbols, power-normalizes (the gain enters
    the graph), adds the pre-drawn zero-forced complex noise, and
    un-normalizes. `noise` holds the equalized noise as reals, one per
    transmitted real dimension (including a padded odd slot).
    """
    length = vec.data.shape[0]
    padded = length + (length % 2)
    if padded != length:
        vec = ad.concat([vec, Tensor(np.zeros(1))], axis=0)
    energy = (vec * vec).sum()
    energy = energy + ad.leaky_relu(1e-12 - energy, 0.0)
    gamma = (power * (padded / 2.0) / energy) ** 0.5
    received = vec + Tensor(noise[:padded]) * (1.0 / gamma)
    return received[:length] if padded != length else received


def _zf_noise(rng, count, sigma2, kind, block_len):
    """Equalized channel noise for `count` complex symbols, as reals."""
    n = np.sqrt(sigma2 / 2.0) * (
        rng.standard_normal(count) + 1j * rng.standard_normal(count)
    )
    if kind == "rayleigh_block":
        blocks = -(-count // block_len)
        g = (rng.standard_normal(blocks) + 1j * rng.standard_normal(blocks)) / np.sqrt(2.0)
        h = np.repeat(g, block_len)[:count]
        n = n / h
    out = np.empty(count * 2)
    out[0::2] = n.real
    out[1::2] = n.imag
    return out


def training_forward(model, images, pcfg, snr_db, rng, stage, pcm, trial):
    """One differentiable pass over a batch at a fixed SNR.

    Returns (loss, parts) where parts carries the tensors a caller may
    inspect (x_hat, s_tilde, alloc when the banks are in the loop).
    """
    chan = replace(pcfg.channel, snr_db=float(snr_db))
    sigma2 = snr_to_sigma2(chan.snr_db, chan.power)
    refs, residuals, received_cond = [], [], []
    for i, img in enumerate(images):
        x_ref, _, x_r, blob = split_source(img, pcfg.q)
        x_c_hat, _, _ = _send_conventional(
            blob, x_ref.shape, replace(pcfg, channel=chan), pcm, trial + i
        )
        refs.append(x_ref)
        residuals.append(x_r)
        received_cond.append(x_c_hat)
    x = batch_to_tensor(refs)
    s, r = model.encoder(x, batch_to_tensor(residuals))
    s_tilde = rate.quantize(s, "train", rng)
    r_tilde = rate.quantize(r, "train", rng)
    mu, sigma = model.hyper(r_tilde)
    alloc = None
    if stage == 1:
        batch, channels, height, width = s.data.shape
        flat = s.reshape(batch, channels * height * width)
        rows = []
        for b in range(batch):
            noise = _zf_noise(
                rng, (flat.data.shape[1] + 1) // 2, sigma2, chan.kind, chan.block_len
            )
            rows.append(send_analog(flat[b], chan.power, noise).reshape(1, -1))
        s_hat = ad.concat(rows, axis=0).reshape(batch, channels, height, width)
    else:
        alloc = rate.allocate_rates(rate.likelihood(s_tilde, mu, sigma))
        encoded = model.banks.encode(s_tilde, alloc)
        rows = []
        for b, vec in enumerate(encoded):
            noise = _zf_noise(
                rng, (vec.data.shape[0] + 1) // 2, sigma2, chan.kind, chan.block_len
            )
            received = send_analog(vec, chan.power, noise)
            rows.append(model.banks.decode(received, alloc.alpha_bar[b]))
        s_hat = ad.concat(rows, axis=0)
    x_hat = model.decoder(batch_to_tensor(received_cond), s_hat, snr_db)
    loss = rd_loss(x, x_hat, s_tilde, r_tilde, mu, sigma, model, pcfg.lambda1)
    return loss, {"x_hat": x_hat, "s_tilde": s_tilde, "alloc": alloc}


def stage_parameters(model, stage):
    if stage == 2:
        return model.ra_parameters()
    if stage == 1:
        return model.non_ra_parameters()
    return model.parameters()


def train(cfg: TrainConfig, dataset, model, pcfg: PipelineConfig | None = None):
    """Run one stage over the dataset; returns (model, loss history).

    The model carries a stage marker; stages must run in order 1, 2, 3.
    """
    if pcfg is None:
        pcfg = PipelineConfig()
    if cfg.stage != model.stage + 1:
        raise ValueError(
            f"stage {cfg.stage} cannot follow stage {model.stage}; "
            "run stages in order"
        )
    pcm = load_code(pcfg.code)
    rng = make_rng(cfg.seed, cfg.stage)
    opt = Adam(stage_parameters(model, cfg.stage), cfg.lr, betas=cfg.betas)
    history = []
    for step in range(cfg.steps):
        if cfg.stage == 3:
            opt.lr = poly_lr(cfg.lr, step, cfg.steps, cfg.poly_power)
        batch_idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        images = []
        for idx in batch_idx:
            img = dataset[idx]
            if cfg.flip_h and rng.integers(2):
                img = img[:, ::-1]
            if cfg.flip_v and rng.integers(2):
                img = img[::-1]
            images.append(np.ascontiguousarray(img))
        snr_db = float(rng.choice(cfg.snr_set))
        opt.zero_grad()
        loss, _ = training_forward(
            model, images, pcfg, snr_db, rng, cfg.stage, pcm,
            trial=(cfg.stage * cfg.steps + step) * cfg.batch_size,
        )
        loss.backward()
        opt.step()
        history.append(float(loss.data))
    model.stage = cfg.stage
    return model, history


def save_model(path, model, history=()):
    """Persist parameters, the stage marker, and the loss log."""
    np.savez(
        path,
        __stage__=np.array(model.stage),
        __config__=np.array(json.dumps(asdict(model.cfg))),
        __history__=np.asarray(list(history), dtype=np.float64),
        **model.state_dict(),
    )


def load_model(path):
    """Rebuild a model from :func:`save_model` output. Returns
    (model, history)."""
    blob = np.load(path, allow_pickle=False)
    raw = json.loads(str(blob["__config__"]))
    for key, value in raw.items():
        if isinstance(value, list):
            raw[key] = tuple(value)
    model = SemanticModel(ModelConfig(**raw))
    state = {name: blob[name] for name in blob.files if not name.startswith("__")}
    model.load_state_dict(state)
    model.stage = int(blob["__stage__"])
    return model, list(blob["__history__"])
