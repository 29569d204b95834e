"""Adversarial training of the atlas.

Every mini-batch runs three phases in order:

1. reconstruction: encoders, decoders and membership minimise the
   membership-weighted squared reconstruction error;
2. discriminator: the chart discriminators learn to tell prior samples
   ``(z, j)`` from encoded data weighted by ``q(j|x)``;
3. generator: encoders and membership maximise ``sum_j q(j|x) log D_j(psi_j(x))``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .atlas import AtlasConfig, AtlasModel, LatentPrior
from .manifolds import PointCloud
from .nn_core import RmspropState, backward, forward_cache, rmsprop_step

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-7
LOG2 = math.log(2.0)
LOG4 = math.log(4.0)

RECON_GROUPS = ("trunk", "encoders", "decoders", "membership_net")
DISC_GROUPS = ("discriminators",)
GEN_GROUPS = ("trunk", "encoders", "membership_net")


@dataclass
class LossConfig:
    batch_size: int = 128
    learning_rate: float = 1e-3
    epochs: int = 100
    disc_steps: int = 1
    gen_steps: int = 1
    rms_decay: float = 0.9
    rms_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")


@dataclass
class LossHistory:
    recon: list[float] = field(default_factory=list)
    disc: list[float] = field(default_factory=list)
    gen: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.recon)

    def append(self, recon: float, disc: float, gen: float) -> None:
        self.recon.append(recon)
        self.disc.append(disc)
        self.gen.append(gen)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "recon_loss", "disc_loss", "gen_loss"])
            for e, row in enumerate(zip(self.recon, self.disc, self.gen), 1):
                w.writerow([e, *(repr(float(v)) for v in row)])

    @classmethod
    def read_csv(cls, path) -> "LossHistory":
        hist = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                hist.append(float(row["recon_loss"]), float(row["disc_loss"]), float(row["gen_loss"]))
        return hist


def _batch(batch) -> np.ndarray:
    x = np.asarray(batch, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a nonempty (B, n) array")
    return x


def _clamped_log(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """log of p clipped to [floor, 1-floor]; also the mask where the clip is inactive."""
    inside = (p > PROB_FLOOR) & (p < 1.0 - PROB_FLOOR)
    return np.log(np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)), inside


class _Encoded:
    """Forward caches of trunk, encoders and membership for one batch."""

    def __init__(self, model: AtlasModel, x: np.ndarray):
        self.model = model
        self.trunk_cache = None if model.trunk is None else forward_cache(model.trunk, x)
        h = x if self.trunk_cache is None else self.trunk_cache[-1][1]
        self.enc_cache = forward_cache(model.encoders, h)
        self.mem_cache = forward_cache(model.membership_net, h)
        self.z = self.enc_cache[-1][1]  # (k, B, d)
        self.q = self.mem_cache[-1][1]  # (B, k)

    def backward(self, dz: np.ndarray | None, dq: np.ndarray | None) -> dict[str, list[np.ndarray]]:
        m = self.model
        need = self.trunk_cache is not None
        grads: dict[str, list[np.ndarray]] = {}
        dh = 0.0
        if dz is not None:
            grads["encoders"], dh_e = backward(m.encoders, self.enc_cache, dz, need_input=need)
            if need:
                dh = dh + dh_e.sum(axis=0)
        if dq is not None:
            grads["membership_net"], dh_m = backward(m.membership_net, self.mem_cache, dq, need_input=need)
            if need:
                dh = dh + dh_m
        if need:
            grads["trunk"], _ = backward(m.trunk, self.trunk_cache, dh, need_input=False)
        return grads


def reconstruction_loss_and_grads(model: AtlasModel, batch, grads: bool = True):
    """Mean over the batch of ``sum_j q(j|x) ||x - phi_j(psi_j(x))||^2``."""
    x = _batch(batch)
    N = x.shape[0]
    enc = _Encoded(model, x)
    dec_cache = forward_cache(model.decoders, enc.z)
    diff = dec_cache[-1][1] - x[None]  # (k, B, n)
    sq = (diff * diff).sum(axis=-1)  # (k, B)
    loss = float((enc.q * sq.T).sum() / N)
    if not grads:
        return loss, None
    dr = (2.0 / N) * enc.q.T[..., None] * diff
    g_dec, dz = backward(model.decoders, dec_cache, dr)
    out = enc.backward(dz, sq.T / N)
    out["decoders"] = g_dec
    return loss, out


def reconstruction_loss(model: AtlasModel, batch) -> float:
    return reconstruction_loss_and_grads(model, batch, grads=False)[0]


def _prior_scores(model: AtlasModel, z: np.ndarray, j: np.ndarray):
    k = model.config.k
    cache = forward_cache(model.discriminators, np.broadcast_to(z, (k, *z.shape)))
    d_all = cache[-1][1][..., 0]  # (k, M)
    return cache, d_all[j, np.arange(len(j))]


def discriminator_loss_and_grads(model: AtlasModel, batch, prior_z, prior_j, grads: bool = True):
    """Negated discriminator objective, so that lower is better for the discriminators."""
    x = _batch(batch)
    prior_z = np.asarray(prior_z, dtype=float)
    prior_j = np.asarray(prior_j, dtype=int)
    if prior_z.ndim != 2 or prior_z.shape[0] == 0 or len(prior_j) != prior_z.shape[0]:
        raise ValueError("prior samples must be a nonempty (M, d) array with M chart labels")
    N, M, k = x.shape[0], prior_z.shape[0], model.config.k
    enc = _Encoded(model, x)
    p_cache, dp = _prior_scores(model, prior_z, prior_j)
    f_cache = forward_cache(model.discriminators, enc.z)
    df = f_cache[-1][1][..., 0]  # (k, B)
    log_p, in_p = _clamped_log(dp)
    log_f, in_f = _clamped_log(1.0 - df)
    loss = float(-(log_p.mean() + (enc.q.T * log_f).sum() / N))
    if not grads:
        return loss, None
    up_p = np.zeros((k, M, 1))
    up_p[prior_j, np.arange(M), 0] = np.where(in_p, -1.0 / (M * np.where(in_p, dp, 1.0)), 0.0)
    up_f = np.where(in_f, enc.q.T / (N * np.where(in_f, 1.0 - df, 1.0)), 0.0)[..., None]
    g_p, _ = backward(model.discriminators, p_cache, up_p, need_input=False)
    g_f, _ = backward(model.discriminators, f_cache, up_f, need_input=False)
    return loss, {"discriminators": [a + b for a, b in zip(g_p, g_f)]}


def discriminator_loss(model: AtlasModel, batch, prior_z, prior_j) -> float:
    return discriminator_loss_and_grads(model, batch, prior_z, prior_j, grads=False)[0]


def generator_loss_and_grads(model: AtlasModel, batch, grads: bool = True):
    """``-(1/N) sum_i sum_j q(j|x_i) log D_j(psi_j(x_i))``; gradients reach encoders and membership."""
    x = _batch(batch)
    N = x.shape[0]
    enc = _Encoded(model, x)
    f_cache = forward_cache(model.discriminators, enc.z)
    df = f_cache[-1][1][..., 0]  # (k, B)
    log_d, inside = _clamped_log(df)
    loss = float(-(enc.q.T * log_d).sum() / N)
    if not grads:
        return loss, None
    up = np.where(inside, -enc.q.T / (N * np.where(inside, df, 1.0)), 0.0)[..., None]
    _, dz = backward(model.discriminators, f_cache, up)
    return loss, enc.backward(dz, -log_d.T / N)


def generator_loss(model: AtlasModel, batch) -> float:
    return generator_loss_and_grads(model, batch, grads=False)[0]


def _flat(model: AtlasModel, groups, grads: dict) -> tuple[list, list]:
    nets = model.networks()
    params, gs = [], []
    for g in groups:
        if g in nets:
            params.extend(nets[g].params())
            gs.extend(grads[g])
    return params, gs


@dataclass
class PhaseOptimizers:
    """One RMSprop state per training phase."""

    recon: RmspropState
    disc: RmspropState
    gen: RmspropState

    @classmethod
    def create(cls, model: AtlasModel, cfg: LossConfig) -> "PhaseOptimizers":
        kw = dict(decay=cfg.rms_decay, eps=cfg.rms_eps, learning_rate=cfg.learning_rate)
        return cls(
            RmspropState.for_params(model.params(RECON_GROUPS), **kw),
            RmspropState.for_params(model.params(DISC_GROUPS), **kw),
            RmspropState.for_params(model.params(GEN_GROUPS), **kw),
        )


def reconstruction_phase(model: AtlasModel, x: np.ndarray, opt: PhaseOptimizers) -> float:
    loss, g = reconstruction_loss_and_grads(model, x)
    rmsprop_step(*_flat(model, RECON_GROUPS, g), opt.recon)
    return loss


def discriminator_phase(model: AtlasModel, x: np.ndarray, rng: np.random.Generator, opt: PhaseOptimizers) -> float:
    """One discriminator update against ``len(x)`` fresh prior samples."""
    z, j = LatentPrior(model.config.d, model.config.k).sample(rng, x.shape[0])
    loss, g = discriminator_loss_and_grads(model, x, z, j)
    rmsprop_step(*_flat(model, DISC_GROUPS, g), opt.disc)
    return loss


def generator_phase(model: AtlasModel, x: np.ndarray, opt: PhaseOptimizers) -> float:
    loss, g = generator_loss_and_grads(model, x)
    rmsprop_step(*_flat(model, GEN_GROUPS, g), opt.gen)
    return loss


def train_step(
    model: AtlasModel,
    batch,
    rng: np.random.Generator,
    opt: PhaseOptimizers,
    cfg: LossConfig | None = None,
) -> tuple[float, float, float]:
    """One reconstruction, discriminator and generator update on ``batch`` (in place).

    Returns the three losses, each measured just before its own (first) update.
    """
    cfg = cfg or LossConfig()
    x = _batch(batch)
    recon = reconstruction_phase(model, x, opt)
    disc = [discriminator_phase(model, x, rng, opt) for _ in range(cfg.disc_steps)]
    gen = [generator_phase(model, x, opt) for _ in range(cfg.gen_steps)]
    return recon, disc[0] if disc else float("nan"), gen[0] if gen else float("nan")


def fit(
    model: AtlasModel,
    data: PointCloud | np.ndarray,
    cfg: LossConfig,
    seed: int = 0,
    callback=None,
) -> LossHistory:
    """Train ``model`` in place for ``cfg.epochs`` epochs and return per-epoch mean losses.

    The data are reshuffled every epoch from a generator seeded with ``seed``;
    the same generator supplies the prior samples.
    """
    x = data.points if isinstance(data, PointCloud) else np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("cannot fit an atlas to an empty dataset")
    if x.shape[1] != model.config.n:
        raise ValueError(f"data dimension {x.shape[1]} != model ambient dimension {model.config.n}")
    rng = np.random.default_rng(seed)
    opt = PhaseOptimizers.create(model, cfg)
    hist = LossHistory()
    N, B = x.shape[0], cfg.batch_size
    for epoch in range(cfg.epochs):
        order = rng.permutation(N)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, N, B):
            sums += train_step(model, x[order[start : start + B]], rng, opt, cfg)
            batches += 1
        hist.append(*(float(v) for v in sums / batches))
        if callback is not None:
            callback(epoch, hist)
    return hist


def dimension_sweep(
    data: PointCloud | np.ndarray,
    d_values,
    base: AtlasConfig,
    cfg: LossConfig,
    seed: int = 0,
    workers: int = 1,
) -> dict[int, tuple[AtlasModel, LossHistory]]:
    """Fit one atlas per latent dimension, identical apart from ``d``."""
    d_values = [int(d) for d in d_values]
    if not d_values:
        raise ValueError("need at least one latent dimension")
    for d in d_values:
        if not 1 <= d <= base.n:
            raise ValueError(f"latent dimension d={d} must lie in [1, n={base.n}]")
    scaling = data.scaling if isinstance(data, PointCloud) else None

    def run(d):
        model = AtlasModel.create(replace(base, d=d), scaling)
        hist = fit(model, data, cfg, seed)
        log.info("d=%d final recon=%.5g gen=%.5g disc=%.5g", d, hist.recon[-1] if hist.recon else float("nan"),
                 hist.gen[-1] if hist.gen else float("nan"), hist.disc[-1] if hist.disc else float("nan"))
        return model, hist

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, d_values))
    else:
        results = [run(d) for d in d_values]
    return dict(zip(d_values, results))
