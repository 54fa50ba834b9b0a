"""Training loops for the shape transformer and the retrieval embedder."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import torch

from . import losses as L
from .errors import ConfigError, NonFiniteValue, TrainingDiverged
from .nets import (Critic, ModelSpec, RetrievalModel, ShapeTransformer,
                   clip_parameters, save_checkpoint)
from .parsemap import _coordinate_grid, bilinear_warp
from .toydata import ToyDataset


@dataclass
class TrainSchedule:
    """Optimizer settings: flat learning rate, then linear decay to zero."""

    optimizer: str = "adam"
    batch_size: int = 32
    lr_initial: float = 1e-4
    epochs_flat: int = 300
    epochs_decay: int = 300
    critic_steps_per_gen: int = 5
    critic_clip: float = 0.01
    seed: int = 0
    max_generator_steps: int | None = None
    snapshot_every: int = 10

    def __post_init__(self):
        if self.optimizer != "adam":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.batch_size < 1 or self.lr_initial <= 0:
            raise ConfigError("batch_size >= 1 and lr_initial > 0 required")
        if min(self.epochs_flat, self.epochs_decay) < 0:
            raise ConfigError("epoch counts must be >= 0")

    @property
    def epochs_total(self) -> int:
        return self.epochs_flat + self.epochs_decay

    def lr_at_epoch(self, epoch: int) -> float:
        """Constant for epochs_flat epochs, then linear to 0 at epochs_total."""
        if epoch < self.epochs_flat:
            return self.lr_initial
        if self.epochs_decay == 0:
            return 0.0
        frac = (epoch - self.epochs_flat) / self.epochs_decay
        return self.lr_initial * max(0.0, 1.0 - frac)


def retrieval_schedule(**overrides) -> TrainSchedule:
    """Shipped retrieval defaults: lr 1e-3, 100 flat + 100 decay epochs."""
    base = dict(lr_initial=1e-3, epochs_flat=100, epochs_decay=100)
    base.update(overrides)
    return TrainSchedule(**base)


@dataclass
class TrainResult:
    model: torch.nn.Module
    metrics: list[dict]
    checkpoint_path: Path | None
    step: int
    critic: torch.nn.Module | None = None
    extra: dict = dc_field(default_factory=dict)


def encode_label_batch(labels: np.ndarray, C: int, dtype=torch.float32) -> torch.Tensor:
    """Stack of label grids (B, H, W) -> one-hot maps (B, C, H, W)."""
    idx = torch.from_numpy(np.ascontiguousarray(labels)).long()
    return torch.nn.functional.one_hot(idx, num_classes=C).permute(0, 3, 1, 2).to(dtype)


def _index_stream(rng: np.random.Generator, n: int):
    while True:
        for i in rng.permutation(n):
            yield int(i)


def _take(stream, k: int) -> list[int]:
    return [next(stream) for _ in range(k)]


class _MetricsWriter:
    def __init__(self, path):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "a", encoding="utf-8")
        else:
            self._fh = None

    def append(self, record: dict) -> None:
        self.records.append(record)
        if self._fh:
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh:
            self._fh.close()


def _batch_mean(fn, targets: torch.Tensor, preds: torch.Tensor, *args) -> torch.Tensor:
    vals = [fn(targets[i], preds[i], *args) for i in range(targets.shape[0])]
    return torch.stack(vals).mean()


def train_shape_transformer(
    data: ToyDataset,
    schedule: TrainSchedule,
    cfg: L.LossConfig | None = None,
    model_spec: ModelSpec | None = None,
    checkpoint_path=None,
    metrics_path=None,
    loss_terms: tuple[str, ...] = ("rec", "adv", "cyc", "coo"),
) -> TrainResult:
    """Adversarial cycle training of the dense warp predictor.

    Photo and caricature minibatches are drawn independently (unpaired).
    Every generator step runs ``critic_steps_per_gen`` clipped critic
    updates first, then one generator update on the full objective.
    ``loss_terms`` exists for the ablation harness; dropping a term zeroes
    its contribution without touching the rest of the loop.
    """
    cfg = cfg or L.LossConfig()
    C = data.num_categories
    H = W = data.spec.size
    if model_spec is None:
        model_spec = ModelSpec(in_channels=C, height=H, width=W)

    torch.manual_seed(schedule.seed)
    model = ShapeTransformer(model_spec)
    critic = Critic(model_spec)
    gen_params = list(model.parameters())
    opt_gen = torch.optim.Adam(gen_params, lr=schedule.lr_initial)
    opt_critic = torch.optim.Adam(critic.parameters(), lr=schedule.lr_initial)

    photos = encode_label_batch(np.stack([s.photo_labels for s in data.samples]), C)
    caris = encode_label_batch(np.stack([s.cari_labels for s in data.samples]), C)
    n = photos.shape[0]
    batch = min(schedule.batch_size, n)
    steps_per_epoch = max(1, n // batch)

    rng = np.random.default_rng(schedule.seed)
    photo_stream = _index_stream(rng, n)
    cari_stream = _index_stream(rng, n)

    coord0 = _coordinate_grid(H, W)
    writer = _MetricsWriter(metrics_path)
    use = set(loss_terms)
    zero = torch.zeros(())

    def snapshot(step):
        return {
            "kind": "shape",
            "spec": model_spec,
            "states": {
                "transformer": copy.deepcopy(model.state_dict()),
                "critic": copy.deepcopy(critic.state_dict()),
            },
            "step": step,
        }

    last_good = snapshot(0)
    step = 0
    done = False
    try:
        for epoch in range(schedule.epochs_total):
            lr = schedule.lr_at_epoch(epoch)
            for group in opt_gen.param_groups + opt_critic.param_groups:
                group["lr"] = lr
            for _ in range(steps_per_epoch):
                pho = photos[_take(photo_stream, batch)]
                car = caris[_take(cari_stream, batch)]

                if "adv" in use:
                    with torch.no_grad():
                        fake_pool = bilinear_warp(
                            pho, model.dec_forward(model.enc_photo(pho), model.enc_cari(car))
                        )
                    critic_loss = zero
                    for _k in range(schedule.critic_steps_per_gen):
                        real = caris[_take(cari_stream, batch)]
                        critic_loss = L.wgan_critic_objective(critic(real), critic(fake_pool))
                        opt_critic.zero_grad()
                        critic_loss.backward()
                        opt_critic.step()
                        clip_parameters(critic, schedule.critic_clip)
                    critic_val = float(critic_loss.detach())
                else:
                    critic_val = 0.0

                z_pho = model.enc_photo(pho)
                z_cari = model.enc_cari(car)
                field = model.dec_forward(z_pho, z_cari)
                if not torch.isfinite(field).all():
                    raise TrainingDiverged(
                        f"non-finite warp field at step {step}", last_good=last_good
                    )
                fake = bilinear_warp(pho, field)

                rec = _batch_mean(L.rec_total, car, fake, cfg) if "rec" in use else zero
                with torch.no_grad():  # unweighted pixel term, logged for monitoring
                    rec_pixel_val = float((car - fake).abs().mean())
                adv = L.wgan_generator_objective(critic(fake)) if "adv" in use else zero

                if "cyc" in use or "coo" in use:
                    z_fake = model.enc_cari(fake)
                    field_cyc = model.dec_cycle(z_fake, z_pho)
                else:
                    field_cyc = None
                if "cyc" in use:
                    cyc_map = bilinear_warp(fake, field_cyc)
                    cyc = _batch_mean(L.rec_total, pho, cyc_map, cfg)
                else:
                    cyc = zero
                if "coo" in use:
                    coords = coord0.unsqueeze(0).expand(batch, -1, -1, -1)
                    m_cyc = bilinear_warp(bilinear_warp(coords, field), field_cyc)
                    coo = torch.stack(
                        [L.coordinate_loss(coord0, m_cyc[i]) for i in range(batch)]
                    ).mean()
                else:
                    coo = zero

                try:
                    total = L.shape_objective(
                        {"rec": rec, "adv": adv, "cyc": cyc, "coo": coo}, cfg)
                except NonFiniteValue as exc:
                    raise TrainingDiverged(
                        f"diverged at step {step}: {exc}", last_good=last_good
                    ) from exc
                opt_gen.zero_grad()
                total.backward()
                opt_gen.step()

                step += 1
                rec_f, adv_f = float(rec.detach()), float(adv.detach())
                cyc_f, coo_f = float(cyc.detach()), float(coo.detach())
                writer.append({
                    "step": step, "epoch": epoch, "lr": lr,
                    "rec": rec_f, "adv": adv_f, "cyc": cyc_f, "coo": coo_f,
                    "rec_pixel": rec_pixel_val,
                    # recombined so the logged record satisfies the objective
                    # identity exactly; differs from the float32 graph value
                    # only by rounding
                    "total": cfg.lambda_r * rec_f + adv_f + cyc_f + coo_f,
                    "critic": critic_val,
                })
                if step % schedule.snapshot_every == 0:
                    last_good = snapshot(step)
                if schedule.max_generator_steps and step >= schedule.max_generator_steps:
                    done = True
                    break
            if done:
                break
    finally:
        writer.close()

    model.eval()
    critic.eval()
    path = None
    if checkpoint_path:
        path = Path(checkpoint_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(
            path, "shape", model_spec,
            {"transformer": model.state_dict(), "critic": critic.state_dict()},
            step=step, seed=schedule.seed,
        )
    return TrainResult(model=model, metrics=writer.records, checkpoint_path=path,
                       step=step, critic=critic)


def _identity_pools(data: ToyDataset) -> dict[int, list[int]]:
    pools: dict[int, list[int]] = {}
    for i, s in enumerate(data.samples):
        pools.setdefault(s.identity, []).append(i)
    return pools


def train_retrieval(
    data: ToyDataset,
    schedule: TrainSchedule | None = None,
    cfg: L.LossConfig | None = None,
    model_spec: ModelSpec | None = None,
    checkpoint_path=None,
    metrics_path=None,
) -> TrainResult:
    """Contrastive + reconstruction training of the retrieval encoders.

    Positive pairs are same-identity photo/caricature maps; negatives mix
    identities. Batches are balanced half and half.
    """
    schedule = schedule or retrieval_schedule()
    cfg = cfg or L.LossConfig()
    pools = _identity_pools(data)
    identities = sorted(pools)
    if len(identities) < 2:
        raise ConfigError("retrieval training needs at least 2 identities for negatives")

    C = data.num_categories
    H = W = data.spec.size
    if model_spec is None:
        model_spec = ModelSpec(in_channels=C, height=H, width=W)

    torch.manual_seed(schedule.seed)
    model = RetrievalModel(model_spec)
    opt = torch.optim.Adam(model.parameters(), lr=schedule.lr_initial)

    photos = encode_label_batch(np.stack([s.photo_labels for s in data.samples]), C)
    caris = encode_label_batch(np.stack([s.cari_labels for s in data.samples]), C)

    rng = np.random.default_rng(schedule.seed)
    n = photos.shape[0]
    batch = min(schedule.batch_size, n)
    half = max(1, batch // 2)
    steps_per_epoch = max(1, n // batch)

    writer = _MetricsWriter(metrics_path)
    step = 0
    done = False
    try:
        for epoch in range(schedule.epochs_total):
            lr = schedule.lr_at_epoch(epoch)
            for group in opt.param_groups:
                group["lr"] = lr
            for _ in range(steps_per_epoch):
                pho_idx, car_idx, positive = [], [], []
                for _p in range(half):
                    ident = identities[rng.integers(len(identities))]
                    pho_idx.append(rng.choice(pools[ident]))
                    car_idx.append(rng.choice(pools[ident]))
                    positive.append(True)
                for _n in range(batch - half):
                    a, b = rng.choice(len(identities), size=2, replace=False)
                    pho_idx.append(rng.choice(pools[identities[a]]))
                    car_idx.append(rng.choice(pools[identities[b]]))
                    positive.append(False)

                pho = photos[pho_idx]
                car = caris[car_idx]
                z_pho = model.enc_photo(pho)
                z_cari = model.enc_cari(car)

                contrast = torch.stack([
                    L.contrastive(z_pho[i], z_cari[i], positive[i], cfg)
                    for i in range(batch)
                ]).mean()
                recon = (_batch_mean(L.rec_pixel, pho, model.decoder(z_pho))
                         + _batch_mean(L.rec_pixel, car, model.decoder(z_cari)))
                total = contrast + recon
                if not torch.isfinite(total):
                    raise TrainingDiverged(f"non-finite retrieval loss at step {step}")
                opt.zero_grad()
                total.backward()
                opt.step()

                step += 1
                writer.append({
                    "step": step, "epoch": epoch, "lr": lr,
                    "contrastive": float(contrast.detach()),
                    "recon": float(recon.detach()), "total": float(total.detach()),
                })
                if schedule.max_generator_steps and step >= schedule.max_generator_steps:
                    done = True
                    break
            if done:
                break
    finally:
        writer.close()

    model.eval()
    path = None
    if checkpoint_path:
        path = Path(checkpoint_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(path, "retrieval", model_spec, {"model": model.state_dict()},
                        step=step, seed=schedule.seed)
    return TrainResult(model=model, metrics=writer.records, checkpoint_path=path, step=step)
