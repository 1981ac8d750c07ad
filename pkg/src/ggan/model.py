"""Generator/discriminator pairs parametric in SNP count.

The discriminator is a conv trunk with two softmax heads sharing it:
``label`` (DF vs SD) and ``realness`` (fake vs real). The generator maps
a noise vector to one profile of shape (n_snps, 1) through dense layers
interleaved with nearest-neighbor upsampling.

For the three published profile widths the layer sizes follow a fixed
lookup (96 does not follow the 2n/4n proportionality of the smaller
models); any other width uses the proportional rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import SpecError

LABEL_HEAD = "label"  # class order (DF, SD)
REALNESS_HEAD = "realness"  # class order (fake, real)
GENERATOR_HEAD = "profile"

FAKE_INDEX, REAL_INDEX = 0, 1

DEFAULT_NOISE_DIM = 100
DEFAULT_DROPOUT_RATE = 0.4

# (conv1, conv2, conv3) channel widths
_DISC_WIDTHS = {12: (24, 48, 24), 25: (50, 100, 50), 96: (180, 360, 180)}
# (first dense, middle dense, output dense) widths; upsampling doubles in between
_GEN_WIDTHS = {12: (24, 48, 12), 25: (50, 100, 25), 96: (90, 180, 96)}


def discriminator_widths(n_snps: int) -> tuple[int, int, int]:
    return _DISC_WIDTHS.get(n_snps, (2 * n_snps, 4 * n_snps, 2 * n_snps))


def generator_widths(n_snps: int) -> tuple[int, int, int]:
    return _GEN_WIDTHS.get(n_snps, (2 * n_snps, 4 * n_snps, n_snps))


def build_discriminator(
    n_snps: int, dropout_rate: float = DEFAULT_DROPOUT_RATE
) -> nn.NetworkSpec:
    """Conv trunk + flatten + dropout + two 2-way softmax heads."""
    if n_snps < 2:
        raise SpecError(f"discriminator needs n_snps >= 2, got {n_snps}")
    c1, c2, c3 = discriminator_widths(n_snps)
    return nn.NetworkSpec(
        input_shape=(n_snps, 1),
        trunk=(
            nn.conv1d(c1, activation="relu"),
            nn.conv1d(c2, activation="relu"),
            nn.conv1d(c3, activation="relu"),
            nn.flatten(),
            nn.dropout(dropout_rate),
        ),
        heads={
            LABEL_HEAD: (nn.softmax_head(2),),
            REALNESS_HEAD: (nn.softmax_head(2),),
        },
    )


def build_generator(n_snps: int, noise_dim: int = DEFAULT_NOISE_DIM) -> nn.NetworkSpec:
    """Dense/upsample stack from noise to one (n_snps, 1) profile.

    The output activation is ReLU; callers clip to [0, 1] before feeding
    profiles to the discriminator (see :func:`generate`).
    """
    if n_snps < 2:
        raise SpecError(f"generator needs n_snps >= 2, got {n_snps}")
    if noise_dim < 1:
        raise SpecError(f"generator needs noise_dim >= 1, got {noise_dim}")
    w1, w2, w_out = generator_widths(n_snps)
    if w_out != n_snps:
        raise SpecError(f"generator output width {w_out} != n_snps {n_snps}")
    return nn.NetworkSpec(
        input_shape=(noise_dim,),
        trunk=(
            nn.dense(w1, activation="relu"),
            nn.upsample1d(),
            nn.dense(w2, activation="relu"),
            nn.upsample1d(),
            nn.dense(n_snps, activation="relu"),
            nn.reshape((n_snps, 1)),
        ),
        heads={GENERATOR_HEAD: ()},
    )


@dataclass
class GganModel:
    """A generator/discriminator pair over profiles of ``n_snps`` SNPs."""

    n_snps: int
    noise_dim: int
    generator_spec: nn.NetworkSpec
    generator_params: dict[str, np.ndarray]
    discriminator_spec: nn.NetworkSpec
    discriminator_params: dict[str, np.ndarray]

    def __post_init__(self):
        gen_out = nn.trunk_output_shape(self.generator_spec)
        if gen_out != (self.n_snps, 1) or self.discriminator_spec.input_shape != gen_out:
            raise SpecError(
                "generator output shape, discriminator input shape and n_snps must agree"
            )
        if set(self.discriminator_spec.head_names) != {LABEL_HEAD, REALNESS_HEAD}:
            raise SpecError("discriminator must expose exactly the label and realness heads")


def init_model(
    n_snps: int,
    noise_dim: int = DEFAULT_NOISE_DIM,
    dropout_rate: float = DEFAULT_DROPOUT_RATE,
    discriminator_seed: int = 0,
    generator_seed: int = 1,
) -> GganModel:
    disc_spec = build_discriminator(n_snps, dropout_rate)
    gen_spec = build_generator(n_snps, noise_dim)
    return GganModel(
        n_snps=n_snps,
        noise_dim=noise_dim,
        generator_spec=gen_spec,
        generator_params=nn.init_parameters(gen_spec, generator_seed),
        discriminator_spec=disc_spec,
        discriminator_params=nn.init_parameters(disc_spec, discriminator_seed),
    )


def sample_noise(
    batch: int,
    noise_dim: int,
    rng: np.random.Generator,
    distribution: str = "normal",
) -> np.ndarray:
    """Draw a (batch, noise_dim) block of generator input noise."""
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    if distribution == "normal":
        return rng.standard_normal((batch, noise_dim))
    if distribution == "uniform":
        return rng.random((batch, noise_dim))
    raise ValueError(f"unknown noise distribution {distribution!r}")


def generate(model: GganModel, noise: np.ndarray, clip: bool = True) -> np.ndarray:
    """Synthetic profiles of shape (batch, n_snps, 1) for a noise batch.

    With ``clip`` (the default) values are clipped to [0, 1] so synthetic
    profiles share the encoded-genotype range; pass ``clip=False`` for
    the raw ReLU outputs.
    """
    noise = np.asarray(noise, dtype=np.float64)
    heads, _ = nn.forward(model.generator_spec, model.generator_params, noise, mode="infer")
    out = heads[GENERATOR_HEAD]
    return np.clip(out, 0.0, 1.0) if clip else out


def discriminate(
    model: GganModel,
    profiles: np.ndarray,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Both discriminator head outputs for a (batch, n_snps, 1) block.

    Returns (label probabilities, realness probabilities), each row a
    probability pair: (DF, SD) and (fake, real) respectively.
    """
    heads, _ = nn.forward(
        model.discriminator_spec, model.discriminator_params, profiles, mode=mode, rng=rng
    )
    return heads[LABEL_HEAD], heads[REALNESS_HEAD]


def parameter_count(spec: nn.NetworkSpec) -> int:
    return sum(int(np.prod(s)) for s in nn.param_shapes(spec).values())
