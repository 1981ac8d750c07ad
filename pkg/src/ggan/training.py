"""Alternating semi-supervised training schedule.

Each epoch runs three turns in order:

1. supervised discriminator turn: N labeled profiles through the label
   head, Adam update of trunk + label head;
2. unsupervised discriminator turn: M/2 real unlabeled + M/2 generated
   profiles through the realness head, Adam update of trunk + realness
   head, generator frozen;
3. generator turn: P noise draws, loss through the frozen
   discriminator's realness head, Adam update of the generator only.

Frozen parts stay bit-identical: the optimizer skips tensors whose
gradient is absent or all-zero, and the steps never request gradients
for heads that are not theirs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from . import nn
from .checkpoint import read_container, write_container
from .errors import ConfigError, GganError, TrainingDivergedError
from .model import (
    FAKE_INDEX,
    GENERATOR_HEAD,
    LABEL_HEAD,
    REAL_INDEX,
    REALNESS_HEAD,
    GganModel,
    build_discriminator,
    build_generator,
    generate,
    sample_noise,
)
from .optim import AdamState, adam_step, init_adam
from .snp_data import GenotypeMatrix, SnpSubset, encode_profiles, labels_to_indices

GENERATOR_LOSS_MODES = ("flipped_target", "literal")
NOISE_DISTRIBUTIONS = ("normal", "uniform")
MISSING_POLICIES = ("reject", "impute_mode")


@dataclass
class TrainConfig:
    """All hyperparameters of one training run."""

    epochs: int = 5000
    seed: int = 0
    n_labeled_batch: int = 10  # supervised batch size
    n_unsup_batch: int = 100  # unsupervised batch size, half real half synthetic
    n_gen_batch: int = 100  # generator batch size
    noise_dim: int = 100
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout_rate: float = 0.4
    test_fraction: float = 0.2
    steps_per_epoch: int = 1
    generator_loss: str = "flipped_target"
    noise_distribution: str = "normal"
    missing_policy: str = "reject"

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.n_labeled_batch < 1:
            raise ConfigError(f"n_labeled_batch must be >= 1, got {self.n_labeled_batch}")
        if self.n_unsup_batch < 2 or self.n_unsup_batch % 2 != 0:
            raise ConfigError(
                f"n_unsup_batch must be even and >= 2, got {self.n_unsup_batch}"
            )
        if self.n_gen_batch < 1:
            raise ConfigError(f"n_gen_batch must be >= 1, got {self.n_gen_batch}")
        if self.noise_dim < 1:
            raise ConfigError(f"noise_dim must be >= 1, got {self.noise_dim}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must be in [0, 1), got {self.test_fraction}")
        if self.steps_per_epoch < 1:
            raise ConfigError(f"steps_per_epoch must be >= 1, got {self.steps_per_epoch}")
        if self.generator_loss not in GENERATOR_LOSS_MODES:
            raise ConfigError(f"unknown generator_loss {self.generator_loss!r}")
        if self.noise_distribution not in NOISE_DISTRIBUTIONS:
            raise ConfigError(f"unknown noise_distribution {self.noise_distribution!r}")
        if self.missing_policy not in MISSING_POLICIES:
            raise ConfigError(f"unknown missing_policy {self.missing_policy!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config JSON must be an object")
        return cls.from_dict(d)


@dataclass
class TrainState:
    """Everything a training run evolves, checkpointable as one unit."""

    config: TrainConfig
    subset: SnpSubset
    model: GganModel
    disc_opt: AdamState
    gen_opt: AdamState
    rng: np.random.Generator
    epoch: int = 0
    history: list[dict] = field(default_factory=list)


def _one_hot(indices: np.ndarray, width: int = 2) -> np.ndarray:
    out = np.zeros((len(indices), width), dtype=np.float64)
    out[np.arange(len(indices)), indices] = 1.0
    return out


def _draw(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    # without replacement when possible, with replacement as fallback
    return rng.choice(n, size=size, replace=size > n)


def init_train_state(config: TrainConfig, subset: SnpSubset) -> TrainState:
    config.validate()
    if len(subset) < 2:
        raise GganError(f"subset of {len(subset)} SNPs is too small to build networks")
    rng = np.random.default_rng(config.seed)
    disc_seed = int(rng.integers(2**31))
    gen_seed = int(rng.integers(2**31))
    disc_spec = build_discriminator(len(subset), config.dropout_rate)
    gen_spec = build_generator(len(subset), config.noise_dim)
    model = GganModel(
        n_snps=len(subset),
        noise_dim=config.noise_dim,
        generator_spec=gen_spec,
        generator_params=nn.init_parameters(gen_spec, gen_seed),
        discriminator_spec=disc_spec,
        discriminator_params=nn.init_parameters(disc_spec, disc_seed),
    )
    opt_kwargs = dict(
        lr=config.learning_rate, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps
    )
    return TrainState(
        config=config,
        subset=subset,
        model=model,
        disc_opt=init_adam(model.discriminator_params, **opt_kwargs),
        gen_opt=init_adam(model.generator_params, **opt_kwargs),
        rng=rng,
    )


def _supervised_step(state, x_labeled, y_onehot, rng) -> tuple[float, float]:
    model = state.model
    idx = _draw(rng, x_labeled.shape[0], state.config.n_labeled_batch)
    xb = x_labeled[idx]
    yb = y_onehot[idx]
    heads, cache = nn.forward(
        model.discriminator_spec, model.discriminator_params, xb, mode="train", rng=rng
    )
    probs = heads[LABEL_HEAD]
    loss = nn.cross_entropy(yb, probs)
    grads, _ = nn.backward(
        model.discriminator_spec,
        model.discriminator_params,
        cache,
        {LABEL_HEAD: nn.cross_entropy_grad(yb, probs)},
    )
    model.discriminator_params, state.disc_opt = adam_step(
        model.discriminator_params, grads, state.disc_opt
    )
    acc = float((probs.argmax(axis=1) == yb.argmax(axis=1)).mean())
    return loss, acc


def _unsupervised_step(state, x_unlabeled, rng) -> tuple[float, float]:
    model = state.model
    half = state.config.n_unsup_batch // 2
    idx = _draw(rng, x_unlabeled.shape[0], half)
    real = x_unlabeled[idx]
    noise = sample_noise(half, model.noise_dim, rng, state.config.noise_distribution)
    fake = generate(model, noise)
    xb = np.concatenate([real, fake], axis=0)
    yb = np.concatenate(
        [
            _one_hot(np.full(half, REAL_INDEX)),
            _one_hot(np.full(half, FAKE_INDEX)),
        ],
        axis=0,
    )
    heads, cache = nn.forward(
        model.discriminator_spec, model.discriminator_params, xb, mode="train", rng=rng
    )
    probs = heads[REALNESS_HEAD]
    loss = nn.cross_entropy(yb, probs)
    grads, _ = nn.backward(
        model.discriminator_spec,
        model.discriminator_params,
        cache,
        {REALNESS_HEAD: nn.cross_entropy_grad(yb, probs)},
    )
    model.discriminator_params, state.disc_opt = adam_step(
        model.discriminator_params, grads, state.disc_opt
    )
    acc = float((probs.argmax(axis=1) == yb.argmax(axis=1)).mean())
    return loss, acc


def _generator_step(state, rng) -> float:
    model = state.model
    batch = state.config.n_gen_batch
    noise = sample_noise(batch, model.noise_dim, rng, state.config.noise_distribution)
    gen_heads, gen_cache = nn.forward(
        model.generator_spec, model.generator_params, noise, mode="train", rng=rng
    )
    raw = gen_heads[GENERATOR_HEAD]
    clipped = np.clip(raw, 0.0, 1.0)
    clip_mask = ((raw > 0.0) & (raw < 1.0)).astype(np.float64)

    disc_heads, disc_cache = nn.forward(
        model.discriminator_spec, model.discriminator_params, clipped, mode="train", rng=rng
    )
    probs = disc_heads[REALNESS_HEAD]
    # flipped_target rewards fooling the realness head; literal keeps the
    # all-fake labels of the printed objective
    target_index = REAL_INDEX if state.config.generator_loss == "flipped_target" else FAKE_INDEX
    yb = _one_hot(np.full(batch, target_index))
    loss = nn.cross_entropy(yb, probs)
    _, d_input = nn.backward(
        model.discriminator_spec,
        model.discriminator_params,
        disc_cache,
        {REALNESS_HEAD: nn.cross_entropy_grad(yb, probs)},
    )
    gen_grads, _ = nn.backward(
        model.generator_spec,
        model.generator_params,
        gen_cache,
        {GENERATOR_HEAD: d_input * clip_mask},
    )
    model.generator_params, state.gen_opt = adam_step(
        model.generator_params, gen_grads, state.gen_opt
    )
    return loss


def supervised_step(
    state: TrainState,
    x_labeled: np.ndarray,
    y_onehot: np.ndarray,
    rng: np.random.Generator | None = None,
) -> float:
    """One labeled turn (trunk + label head updated). Returns the loss."""
    if x_labeled.shape[0] == 0:
        raise GganError("labeled training set is empty")
    loss, _ = _supervised_step(state, x_labeled, y_onehot, rng if rng is not None else state.rng)
    return loss

def unsupervised_step(
    state: TrainState,
    x_unlabeled: np.ndarray,
    rng: np.random.Generator | None = None,
) -> float:
    """One real-vs-synthetic turn (trunk + realness head updated)."""
    if x_unlabeled.shape[0] == 0:
        raise GganError("unlabeled training set is empty")
    loss, _ = _unsupervised_step(state, x_unlabeled, rng if rng is not None else state.rng)
    return loss


def generator_step(state: TrainState, rng: np.random.Generator | None = None) -> float:
    """One generator turn against the frozen discriminator."""
    return _generator_step(state, rng if rng is not None else state.rng)


def encode_training_data(
    labeled: GenotypeMatrix,
    unlabeled: GenotypeMatrix,
    subset: SnpSubset,
    missing_policy: str = "reject",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encode both cohorts over ``subset``; returns (x_labeled, y_onehot, x_unlabeled)
    with profile arrays shaped (n, n_snps, 1)."""
    if labeled.labels is None:
        raise GganError("labeled matrix has no labels")
    x_lab = encode_profiles(labeled, subset, missing_policy)[:, :, None]
    y = _one_hot(labels_to_indices(labeled.labels))
    x_unlab = encode_profiles(unlabeled, subset, missing_policy)[:, :, None]
    return x_lab, y, x_unlab


def train(
    config: TrainConfig,
    labeled: GenotypeMatrix,
    unlabeled: GenotypeMatrix,
    subset: SnpSubset,
    state: TrainState | None = None,
) -> TrainState:
    """Run the alternating schedule for ``config.epochs`` epochs.

    Pass a ``state`` loaded from a checkpoint to resume; the run then
    continues from ``state.epoch`` and is bit-identical to one that was
    never interrupted. Raises TrainingDivergedError (with the epoch) on
    a non-finite loss.
    """
    x_lab, y, x_unlab = encode_training_data(labeled, unlabeled, subset, config.missing_policy)
    if state is None:
        state = init_train_state(config, subset)
    elif state.model.n_snps != len(subset):
        raise GganError("resume state was built for a different SNP subset")

    while state.epoch < config.epochs:
        sup_losses, sup_accs, unsup_losses, unsup_accs, gen_losses = [], [], [], [], []
        for _ in range(config.steps_per_epoch):
            loss, acc = _supervised_step(state, x_lab, y, state.rng)
            sup_losses.append(loss)
            sup_accs.append(acc)
            loss, acc = _unsupervised_step(state, x_unlab, state.rng)
            unsup_losses.append(loss)
            unsup_accs.append(acc)
            gen_losses.append(_generator_step(state, state.rng))
        entry = {
            "epoch": state.epoch + 1,
            "L_sup": float(np.mean(sup_losses)),
            "L_unsup": float(np.mean(unsup_losses)),
            "L_gen": float(np.mean(gen_losses)),
            "acc_sup": float(np.mean(sup_accs)),
            "acc_unsup": float(np.mean(unsup_accs)),
        }
        if not all(np.isfinite(v) for v in entry.values()):
            raise TrainingDivergedError(
                state.epoch + 1, f"non-finite loss at epoch {state.epoch + 1}"
            )
        state.history.append(entry)
        state.epoch += 1
    return state


def history_jsonl(state: TrainState) -> str:
    """Per-epoch JSON-lines history (epoch plus the three losses)."""
    lines = []
    for entry in state.history:
        lines.append(
            json.dumps(
                {
                    "epoch": entry["epoch"],
                    "L_sup": entry["L_sup"],
                    "L_unsup": entry["L_unsup"],
                    "L_gen": entry["L_gen"],
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def save_checkpoint(state: TrainState, path: str | Path) -> None:
    """Persist the full training state; the round trip is bit-exact."""
    arrays: dict[str, np.ndarray] = {}
    for prefix, params, opt in (
        ("disc", state.model.discriminator_params, state.disc_opt),
        ("gen", state.model.generator_params, state.gen_opt),
    ):
        for name, p in params.items():
            arrays[f"{prefix}.param.{name}"] = p
        for name, m in opt.m.items():
            arrays[f"{prefix}.adam_m.{name}"] = m
        for name, v in opt.v.items():
            arrays[f"{prefix}.adam_v.{name}"] = v
    meta = {
        "config": state.config.to_dict(),
        "subset": {
            "snp_ids": list(state.subset.snp_ids),
            "provenance": state.subset.provenance.to_dict(),
            "afd_values": dict(state.subset.afd_values)
            if state.subset.afd_values is not None
            else None,
            "empty_warning": state.subset.empty_warning,
        },
        "epoch": state.epoch,
        "history": state.history,
        "rng_state": state.rng.bit_generator.state,
        "disc_spec": nn.network_to_dict(state.model.discriminator_spec),
        "gen_spec": nn.network_to_dict(state.model.generator_spec),
        "adam": {
            "disc": {"t": state.disc_opt.t},
            "gen": {"t": state.gen_opt.t},
        },
        "n_snps": state.model.n_snps,
        "noise_dim": state.model.noise_dim,
    }
    write_container(path, kind="ggan.train_state", meta=meta, arrays=arrays)


def load_checkpoint(path: str | Path) -> TrainState:
    from .snp_data import SubsetProvenance  # local import avoids cycle at module load

    meta, arrays = read_container(path, expect_kind="ggan.train_state")
    config = TrainConfig.from_dict(meta["config"])
    subset = SnpSubset(
        snp_ids=tuple(meta["subset"]["snp_ids"]),
        provenance=SubsetProvenance.from_dict(meta["subset"]["provenance"]),
        afd_values=meta["subset"]["afd_values"],
        empty_warning=meta["subset"]["empty_warning"],
    )
    disc_spec = nn.network_from_dict(meta["disc_spec"])
    gen_spec = nn.network_from_dict(meta["gen_spec"])

    def _collect(prefix: str, spec: nn.NetworkSpec, section: str) -> dict[str, np.ndarray]:
        wanted = nn.param_shapes(spec)
        out = {}
        for name, shape in wanted.items():
            key = f"{prefix}.{section}.{name}"
            if key not in arrays or arrays[key].shape != shape:
                raise GganError(f"checkpoint is missing or misshapes tensor {key!r}")
            out[name] = arrays[key]
        return out

    disc_params = _collect("disc", disc_spec, "param")
    gen_params = _collect("gen", gen_spec, "param")
    model = GganModel(
        n_snps=int(meta["n_snps"]),
        noise_dim=int(meta["noise_dim"]),
        generator_spec=gen_spec,
        generator_params=gen_params,
        discriminator_spec=disc_spec,
        discriminator_params=disc_params,
    )
    opt_kwargs = dict(
        lr=config.learning_rate, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps
    )
    disc_opt = AdamState(
        **opt_kwargs,
        t=int(meta["adam"]["disc"]["t"]),
        m=_collect("disc", disc_spec, "adam_m"),
        v=_collect("disc", disc_spec, "adam_v"),
    )
    gen_opt = AdamState(
        **opt_kwargs,
        t=int(meta["adam"]["gen"]["t"]),
        m=_collect("gen", gen_spec, "adam_m"),
        v=_collect("gen", gen_spec, "adam_v"),
    )
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    return TrainState(
        config=config,
        subset=subset,
        model=model,
        disc_opt=disc_opt,
        gen_opt=gen_opt,
        rng=rng,
        epoch=int(meta["epoch"]),
        history=list(meta["history"]),
    )
