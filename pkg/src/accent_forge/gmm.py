"""Diagonal-covariance Gaussian mixtures: scoring, alignment, EM training.

All density math runs in the log domain; mixture sums use log-sum-exp.
The universal background model is trained by binary splitting: fit one
Gaussian, repeatedly split every component (mean +- 0.1 sigma), and run a
few EM iterations per stage until the target component count is reached.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import FormatError
from .frontend import feature_array

MODEL_MAGIC = b"AGM1"

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class DiagGmm:
    """Mixture weights, means, and diagonal variances."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        n = self.weights.shape[0]
        if self.means.shape[0] != n or self.variances.shape != self.means.shape:
            raise ValueError("weights, means and variances must agree on component count")
        if self.means.ndim != 2:
            raise ValueError("means must be (components x dim)")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-10:
            raise ValueError("weights must be non-negative and sum to 1")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")
        for arr in (self.weights, self.means, self.variances):
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters contain NaN or Inf")

    @property
    def num_components(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]


@dataclass
class GmmStats:
    """Zeroth/first/second-order sufficient statistics per component."""

    n: np.ndarray
    sum_x: np.ndarray
    sum_x2: np.ndarray
    total_frames: int


def _check_dim(g, data):
    if data.shape[1] != g.dim:
        raise ValueError("feature dim %d does not match model dim %d" % (data.shape[1], g.dim))


def log_component_densities(g, data):
    """(K x N) log densities of every frame under every component."""
    _check_dim(g, data)
    inv_var = 1.0 / g.variances
    const = -0.5 * (g.dim * _LOG_2PI + np.sum(np.log(g.variances), axis=1))
    quad = (
        (data * data) @ inv_var.T
        - 2.0 * data @ (g.means * inv_var).T
        + np.sum(g.means * g.means * inv_var, axis=1)
    )
    return const - 0.5 * quad


def component_density(g, i, x):
    """Density of one component at one point (computed in the log domain)."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if not 0 <= i < g.num_components:
        raise ValueError("component index %d out of range" % i)
    return float(np.exp(log_component_densities(g, x)[0, i]))


def _log_weights(g):
    with np.errstate(divide="ignore"):
        return np.log(g.weights)


def frame_logpdf(g, feats):
    """Per-frame mixture log density, log sum_i w_i p_i(x)."""
    data = feature_array(feats)
    joint = log_component_densities(g, data) + _log_weights(g)
    return logsumexp(joint, axis=1)


def loglik(g, feats):
    """Total log-likelihood of a frame sequence (frames independent)."""
    data = feature_array(feats)
    if data.shape[0] < 1:
        raise ValueError("log-likelihood of an empty feature matrix is undefined")
    return float(np.sum(frame_logpdf(g, data)))


def responsibilities(g, data):
    """(K x N) posterior alignment of each frame over components."""
    joint = log_component_densities(g, data) + _log_weights(g)
    joint -= logsumexp(joint, axis=1, keepdims=True)
    post = np.exp(joint)
    post /= post.sum(axis=1, keepdims=True)
    return post


def posterior_alignment(g, x):
    """Pr(i | x) for a single frame; entries sum to 1."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return responsibilities(g, x)[0]


def accumulate_stats(g, feats, chunk=8192):
    """Posterior-weighted sufficient statistics, Kahan-compensated per chunk."""
    data = feature_array(feats)
    _check_dim(g, data)
    n = np.zeros(g.num_components)
    sum_x = np.zeros((g.num_components, g.dim))
    sum_x2 = np.zeros((g.num_components, g.dim))
    comp_n = np.zeros_like(n)
    comp_x = np.zeros_like(sum_x)
    comp_x2 = np.zeros_like(sum_x2)

    def kahan_add(total, comp, term):
        y = term - comp
        t = total + y
        comp[...] = (t - total) - y
        total[...] = t

    for start in range(0, data.shape[0], chunk):
        block = data[start:start + chunk]
        post = responsibilities(g, block)
        kahan_add(n, comp_n, post.sum(axis=0))
        kahan_add(sum_x, comp_x, post.T @ block)
        kahan_add(sum_x2, comp_x2, post.T @ (block * block))
    return GmmStats(n=n, sum_x=sum_x, sum_x2=sum_x2, total_frames=data.shape[0])


def _maximize(stats, floor, old_means, old_variances):
    """M-step from sufficient statistics; components with no mass keep old params."""
    n = stats.n
    weights = np.maximum(n, 0.0) / float(stats.total_frames)
    weights /= weights.sum()
    dead = n <= 1e-10
    safe_n = np.where(dead, 1.0, n)
    means = stats.sum_x / safe_n[:, None]
    variances = np.maximum(stats.sum_x2 / safe_n[:, None] - means * means, floor)
    means[dead] = old_means[dead]
    variances[dead] = old_variances[dead]
    return weights, means, variances


def em_train(
    feats,
    target_components,
    em_iters_per_stage=5,
    seed=0,
    final_em_iters=10,
    floor_scale=1e-6,
    return_history=False,
    label="",
):
    """EM-trained mixture grown by binary splitting.

    target_components must be a power of two. The per-stage log-likelihood
    sequence is non-decreasing (up to the variance floor). seed is accepted
    for interface stability; the split initialization is deterministic.
    """
    del seed
    data = feature_array(feats)
    if target_components < 1 or target_components & (target_components - 1):
        raise ValueError("target component count must be a power of 2")
    if data.shape[0] < target_components:
        raise ValueError(
            "cannot fit %d components on %d frames" % (target_components, data.shape[0])
        )
    if data.shape[0] < 10 * target_components:
        warnings.warn(
            "only %d frames for %d components; at least 10x is recommended"
            % (data.shape[0], target_components),
            stacklevel=2,
        )
    floor = floor_scale * np.maximum(data.var(axis=0), 1e-12)

    weights = np.ones(1)
    means = data.mean(axis=0)[None, :]
    variances = np.maximum(data.var(axis=0), floor)[None, :]
    history = []

    current = 1
    while True:
        stage_ll = []
        if current > 1:
            iters = final_em_iters if current == target_components else em_iters_per_stage
            for _ in range(iters):
                g = DiagGmm(weights, means, variances)
                stats = accumulate_stats(g, data)
                stage_ll.append(loglik(g, data))
                weights, means, variances = _maximize(stats, floor, means, variances)
            stage_ll.append(loglik(DiagGmm(weights, means, variances), data))
        history.append({"components": current, "loglik": stage_ll})
        if current >= target_components:
            break
        offset = 0.1 * np.sqrt(variances)
        means = np.vstack([means + offset, means - offset])
        variances = np.vstack([variances, variances])
        weights = np.concatenate([weights, weights]) / 2.0
        current *= 2

    model = DiagGmm(weights, means, variances, label=label)
    if return_history:
        return model, history
    return model


def write_model(path, g):
    """AGM1 model file: u32 N, u32 M, label, weights, means, variances."""
    label = g.label.encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MODEL_MAGIC)
        handle.write(struct.pack("<III", g.num_components, g.dim, len(label)))
        handle.write(label)
        handle.write(np.ascontiguousarray(g.weights, dtype="<f8").tobytes())
        handle.write(np.ascontiguousarray(g.means, dtype="<f8").tobytes())
        handle.write(np.ascontiguousarray(g.variances, dtype="<f8").tobytes())


def read_model(path):
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != MODEL_MAGIC:
            raise FormatError("bad magic %r in %s (expected %r)" % (magic, path, MODEL_MAGIC))
        header = handle.read(12)
        if len(header) != 12:
            raise FormatError("truncated model header in %s" % path)
        n, dim, label_len = struct.unpack("<III", header)
        label = handle.read(label_len).decode("utf-8")
        body = handle.read((n + 2 * n * dim) * 8)
        if len(body) != (n + 2 * n * dim) * 8:
            raise FormatError("truncated model data in %s" % path)
        flat = np.frombuffer(body, dtype="<f8")
        weights = flat[:n].copy()
        means = flat[n:n + n * dim].reshape(n, dim).copy()
        variances = flat[n + n * dim:].reshape(n, dim).copy()
    return DiagGmm(weights, means, variances, label=label)
