"""Finite-difference verification of the backward pass.

The probe function is a fixed random linear functional of one head's
output, f(theta) = sum(c * head(theta)). Central differences
(f(theta+eps) - f(theta-eps)) / 2eps are compared elementwise against
the analytic gradient from :func:`ggan.nn.backward`.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from . import nn


def _probe_loss(spec, params, x, head, coeffs):
    heads, _ = nn.forward(spec, params, x, mode="infer")
    return float((coeffs * heads[head]).sum())


def _relu_kink_cutoff(spec, cache) -> int:
    """Index of the last trunk layer whose ReLU pre-activation hits 0
    exactly, or -1. Parameters at or before that layer feed a
    nondifferentiable point, so their finite differences are excluded."""
    cutoff = -1
    for i, layer in enumerate(spec.trunk):
        if layer.kind in ("dense", "conv1d") and layer.activation == "relu":
            if np.any(cache["trunk"][i]["z"] == 0.0):
                cutoff = i
    return cutoff


def finite_diff_check(
    spec: nn.NetworkSpec,
    params: Mapping[str, np.ndarray],
    x: np.ndarray,
    head: str,
    epsilon: float = 1e-5,
    rng: np.random.Generator | None = None,
    max_checks_per_tensor: int | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs in inference mode (dropout inactive, deterministic forward).
    With ``max_checks_per_tensor`` set, only a seeded random coordinate
    sample of each tensor is perturbed; otherwise every coordinate is.
    Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if head not in spec.heads:
        raise ValueError(f"unknown head {head!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    x = np.asarray(x, dtype=np.float64)

    heads, cache = nn.forward(spec, params, x, mode="infer")
    coeffs = rng.standard_normal(heads[head].shape)
    grads, _ = nn.backward(spec, params, cache, {head: coeffs})
    kink_cutoff = _relu_kink_cutoff(spec, cache)

    max_rel = 0.0
    for name, p in params.items():
        if name.startswith("trunk."):
            layer_idx = int(name.split(".")[1])
            if layer_idx <= kink_cutoff:
                continue
        flat = p.size
        if max_checks_per_tensor is not None and flat > max_checks_per_tensor:
            coords = rng.choice(flat, size=max_checks_per_tensor, replace=False)
        else:
            coords = np.arange(flat)
        analytic = grads[name].reshape(-1)
        work = {k: v for k, v in params.items()}
        for c in coords:
            perturbed = p.copy().reshape(-1)
            perturbed[c] += epsilon
            work[name] = perturbed.reshape(p.shape)
            f_plus = _probe_loss(spec, work, x, head, coeffs)
            perturbed[c] -= 2.0 * epsilon
            work[name] = perturbed.reshape(p.shape)
            f_minus = _probe_loss(spec, work, x, head, coeffs)
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            denom = max(abs(analytic[c]), abs(numeric), 1e-6)
            max_rel = max(max_rel, abs(analytic[c] - numeric) / denom)
        work[name] = p
    return max_rel
