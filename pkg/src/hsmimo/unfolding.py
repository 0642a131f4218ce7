"""Deep-unfolding training of the THS and TPG detector parameters.

The unrolled detector recursions are differentiated by hand: the only
trainable quantities are the O(T) per-iteration scalars, so the backward
pass is a short chain of matrix products mirroring the forward pass.
Training uses supervised (x, y) mini-batches with a fresh channel per
mini-batch, the MSE loss N^{-1} ||s_out - x||^2 averaged over the batch,
a from-scratch Adam optimizer, and incremental (generation-wise) deepening
of the trained prefix.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .detectors import DetectorDivergenceError, ThsParams, TpgParams, lmmse_like_matrix
from .system_model import RngStream, SystemDims, realify_channel, sample_channel, snr_to_sigma2

Params = Union[ThsParams, TpgParams]

BETA_FLOOR = 1e-6  # positivity floor applied after every optimizer step


class TrainingDivergedError(Exception):
    """Training aborted on a non-finite state; carries the last stable parameters."""

    def __init__(self, generation: int, batch_index: int, last_params: Params, reason: str):
        self.generation = generation
        self.batch_index = batch_index
        self.last_params = last_params
        super().__init__(
            f"training diverged in generation {generation}, batch {batch_index}: {reason}")


@dataclass
class TrainingConfig:
    """Hyperparameters of one deep-unfolding training run.

    ``snr_schedule`` lists the SNR values training batches are drawn at;
    with a single entry every batch uses that SNR, otherwise each
    mini-batch picks one entry uniformly at random.
    """

    dims: SystemDims
    snr_schedule: tuple = (20.0,)
    T: int = 30
    batches_per_generation: int = 200
    batch_size: int = 200
    learning_rate: float = 2e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    init_eta: float = 0.01
    init_beta: float = 1.0
    init_zeta: float = 1.0
    seed: int = 0
    model: str = "ths"  # "ths" | "scalable_tpg" | "tpg"
    init_gamma: float = 0.01
    init_theta: float = 1.0
    alpha: float = 1.0  # LMMSE-like regularizer, fixed during training

    def __post_init__(self):
        if isinstance(self.snr_schedule, (int, float)):
            self.snr_schedule = (float(self.snr_schedule),)
        else:
            self.snr_schedule = tuple(float(s) for s in self.snr_schedule)
        if not self.snr_schedule:
            raise ValueError("snr_schedule must not be empty")
        if self.batch_size < 1 or self.batches_per_generation < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.T < 1:
            raise ValueError("depth must be >= 1")
        if self.model not in ("ths", "scalable_tpg", "tpg"):
            raise ValueError(f"unknown model {self.model!r}")

    def to_dict(self) -> dict:
        return {
            "dims": {"n": self.dims.n, "m": self.dims.m},
            "snr_schedule": list(self.snr_schedule),
            "T": self.T,
            "batches_per_generation": self.batches_per_generation,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
            "init_eta": self.init_eta,
            "init_beta": self.init_beta,
            "init_zeta": self.init_zeta,
            "seed": self.seed,
            "model": self.model,
            "init_gamma": self.init_gamma,
            "init_theta": self.init_theta,
            "alpha": self.alpha,
        }

    def initial_params(self) -> Params:
        if self.model == "ths":
            return ThsParams.initial(self.T, eta=self.init_eta, beta=self.init_beta,
                                     zeta=self.init_zeta)
        variant = "scalable" if self.model == "scalable_tpg" else "lmmse"
        return TpgParams.initial(self.T, gamma=self.init_gamma, theta=self.init_theta,
                                 variant=variant, alpha=self.alpha)


def config_fingerprint(config: TrainingConfig) -> str:
    """Stable hash of the full training configuration."""
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Parameter gradients and their flat layout
# ---------------------------------------------------------------------------

@dataclass
class ThsGradient:
    """Loss gradients w.r.t. the THS scalars; entries beyond the trained depth are 0."""

    d_beta: np.ndarray
    d_eta: np.ndarray
    d_zeta: np.ndarray


@dataclass
class TpgGradient:
    d_gamma: np.ndarray
    d_theta: np.ndarray


def _flatten_params(params: Params) -> np.ndarray:
    if isinstance(params, ThsParams):
        return np.concatenate([params.beta, params.eta, params.zeta])
    return np.concatenate([params.gamma, params.theta])


def _unflatten_params(template: Params, flat: np.ndarray) -> Params:
    T = template.T
    if isinstance(template, ThsParams):
        return ThsParams(beta=flat[:T].copy(), eta=flat[T:2 * T].copy(), zeta=flat[2 * T:].copy())
    return TpgParams(gamma=flat[:T].copy(), theta=flat[T:].copy(),
                     variant=template.variant, alpha=template.alpha)


def _flatten_grads(grads) -> np.ndarray:
    if isinstance(grads, ThsGradient):
        return np.concatenate([grads.d_beta, grads.d_eta, grads.d_zeta])
    return np.concatenate([grads.d_gamma, grads.d_theta])


# ---------------------------------------------------------------------------
# Forward / backward through the unrolled recursions
# ---------------------------------------------------------------------------

@dataclass
class ThsActivations:
    """Saved forward states of the unrolled THS recursion (batch columns)."""

    u: np.ndarray  # (depth+1, N, B)
    s: np.ndarray  # (depth+1, N, B)
    g: np.ndarray  # (depth, N, B), g_t = H^T (y - H s_t)
    H: np.ndarray
    depth: int


@dataclass
class TpgActivations:
    s: np.ndarray  # (depth+1, N, B)
    r: np.ndarray  # (depth, N, B), pre-projection search points
    q: np.ndarray  # (depth, N, B), q_t = W (y - H s_t)
    H: np.ndarray
    W: np.ndarray
    depth: int


def _mse_loss(s_out: np.ndarray, x: np.ndarray) -> float:
    N, B = x.shape
    return float(np.sum((s_out - x) ** 2)) / (N * B)


def forward_unrolled(H, y, x, params: Params, depth_used: int):
    """Run the unrolled recursion for ``depth_used`` layers on a batch.

    ``y`` is (M, B), ``x`` is (N, B) with one sample per column.  Returns
    the MSE loss (normalized by N and batch size) and the retained
    activations for the backward pass.
    """
    if not (1 <= depth_used <= params.T):
        raise ValueError(f"depth_used must be in [1, {params.T}], got {depth_used}")
    H = np.asarray(H, dtype=float)
    M, N = H.shape
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    B = x.shape[1]
    if x.shape != (N, B) or y.shape != (M, B):
        raise ValueError("batch shapes do not match the channel")

    if isinstance(params, ThsParams):
        u = np.zeros((depth_used + 1, N, B))
        s = np.zeros((depth_used + 1, N, B))
        g = np.zeros((depth_used, N, B))
        with np.errstate(over="ignore", invalid="ignore"):  # guarded explicitly below
            for t in range(depth_used):
                g[t] = H.T @ (y - H @ s[t])
                u[t + 1] = params.zeta[t] * u[t] + params.eta[t] * g[t]
                if not np.all(np.isfinite(u[t + 1])):
                    raise DetectorDivergenceError("ths", t)
                s[t + 1] = np.tanh(params.beta[t] * u[t + 1])
        acts = ThsActivations(u=u, s=s, g=g, H=H, depth=depth_used)
        return _mse_loss(s[depth_used], x), acts

    W = H.T if params.variant == "scalable" else lmmse_like_matrix(H, params.alpha)
    s = np.zeros((depth_used + 1, N, B))
    r = np.zeros((depth_used, N, B))
    q = np.zeros((depth_used, N, B))
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(depth_used):
            q[t] = W @ (y - H @ s[t])
            r[t] = s[t] + params.gamma[t] * q[t]
            if not np.all(np.isfinite(r[t])):
                raise DetectorDivergenceError(params.variant, t)
            s[t + 1] = np.tanh(r[t] / abs(params.theta[t]))
    acts = TpgActivations(s=s, r=r, q=q, H=H, W=W, depth=depth_used)
    return _mse_loss(s[depth_used], x), acts


def backward_gradients(acts, params: Params, x) -> Union[ThsGradient, TpgGradient]:
    """Exact reverse-mode gradients of the MSE loss w.r.t. every layer scalar.

    Gradient arrays have length params.T; layers beyond the unrolled depth
    do not influence the loss and get exact zeros.
    """
    x = np.asarray(x, dtype=float)
    N, B = x.shape
    d = acts.depth
    H = acts.H

    if isinstance(acts, ThsActivations):
        d_beta = np.zeros(params.T)
        d_eta = np.zeros(params.T)
        d_zeta = np.zeros(params.T)
        ds = 2.0 * (acts.s[d] - x) / (N * B)
        du_carry = np.zeros_like(ds)
        for t in range(d, 0, -1):
            # s_t = tanh(beta_{t-1} u_t)
            w = ds * (1.0 - acts.s[t] ** 2)
            d_beta[t - 1] = np.sum(w * acts.u[t])
            du = du_carry + params.beta[t - 1] * w
            # u_t = zeta_{t-1} u_{t-1} + eta_{t-1} g_{t-1}
            d_zeta[t - 1] = np.sum(du * acts.u[t - 1])
            d_eta[t - 1] = np.sum(du * acts.g[t - 1])
            # g_{t-1} = H^T y - H^T H s_{t-1}
            ds = -params.eta[t - 1] * (H.T @ (H @ du))
            du_carry = params.zeta[t - 1] * du
        return ThsGradient(d_beta=d_beta, d_eta=d_eta, d_zeta=d_zeta)

    W = acts.W
    d_gamma = np.zeros(params.T)
    d_theta = np.zeros(params.T)
    ds = 2.0 * (acts.s[d] - x) / (N * B)
    for t in range(d - 1, -1, -1):
        # s_{t+1} = tanh(r_t / |theta_t|)
        a = 1.0 / abs(params.theta[t])
        w = ds * (1.0 - acts.s[t + 1] ** 2)
        d_theta[t] = np.sum(w * acts.r[t]) * (-np.sign(params.theta[t]) / params.theta[t] ** 2)
        dr = a * w
        # r_t = s_t + gamma_t W (y - H s_t)
        d_gamma[t] = np.sum(dr * acts.q[t])
        ds = dr - params.gamma[t] * (H.T @ (W.T @ dr))
    return TpgGradient(d_gamma=d_gamma, d_theta=d_theta)


def finite_difference_gradient(params: Params, eps: float,
                               loss_fn: Callable[[Params], float]):
    """Central-difference gradients of ``loss_fn`` w.r.t. every scalar parameter.

    Testing oracle for ``backward_gradients``; O(parameters) loss
    evaluations, exact to O(eps^2) on smooth losses.
    """
    if eps <= 0:
        raise ValueError("perturbation must be positive")
    flat = _flatten_params(params)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + eps
        loss_plus = loss_fn(_unflatten_params(params, bumped))
        bumped[i] = flat[i] - eps
        loss_minus = loss_fn(_unflatten_params(params, bumped))
        grad[i] = (loss_plus - loss_minus) / (2.0 * eps)
    T = params.T
    if isinstance(params, ThsParams):
        return ThsGradient(d_beta=grad[:T], d_eta=grad[T:2 * T], d_zeta=grad[2 * T:])
    return TpgGradient(d_gamma=grad[:T], d_theta=grad[T:])


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Adam moment accumulators over the flattened parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), step=0)


def adam_step(params: Params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns (new params, new state).

    After the update, inverse temperatures are re-clamped to stay positive
    (beta_t >= BETA_FLOOR for THS; |theta_t| >= BETA_FLOOR for TPG).
    """
    flat = _flatten_params(params)
    g = _flatten_grads(grads)
    if g.shape != flat.shape:
        raise ValueError(f"gradient size {g.shape} does not match parameters {flat.shape}")
    if not np.all(np.isfinite(g)):
        bad = np.flatnonzero(~np.isfinite(g))
        raise FloatingPointError(f"non-finite gradient entries at flat indices {bad[:8].tolist()}")
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * g ** 2
    step = state.step + 1
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    new_flat = flat - lr * m_hat / (np.sqrt(v_hat) + eps)
    T = params.T
    if isinstance(params, ThsParams):
        new_flat[:T] = np.maximum(new_flat[:T], BETA_FLOOR)
    else:
        theta = new_flat[T:]
        signs = np.where(theta >= 0, 1.0, -1.0)
        new_flat[T:] = signs * np.maximum(np.abs(theta), BETA_FLOOR)
    return _unflatten_params(params, new_flat), AdamState(m=m, v=v, step=step)


# ---------------------------------------------------------------------------
# Incremental training
# ---------------------------------------------------------------------------

@dataclass
class TrainingResult:
    params: Params
    loss_log: list  # (generation, batch_index, loss) triples
    config: TrainingConfig

    def fingerprint(self) -> str:
        return config_fingerprint(self.config)


def _draw_minibatch(config: TrainingConfig, stream: RngStream):
    """One supervised mini-batch: fresh channel, batch of (x, y) columns."""
    dims = config.dims
    H = realify_channel(sample_channel(dims, stream.child(0)))
    x = 1.0 - 2.0 * stream.child(1).generator().integers(
        0, 2, size=(dims.N, config.batch_size)).astype(float)
    if len(config.snr_schedule) == 1:
        snr_db = config.snr_schedule[0]
    else:
        idx = int(stream.child(3).generator().integers(len(config.snr_schedule)))
        snr_db = config.snr_schedule[idx]
    sigma2 = snr_to_sigma2(snr_db, dims.n)
    w = math.sqrt(sigma2 / 2.0) * stream.child(2).generator().standard_normal(
        (dims.M, config.batch_size))
    y = H @ x + w
    return H, x, y


def incremental_train(config: TrainingConfig) -> TrainingResult:
    """Train by incrementally deepening the unrolled prefix.

    Generation g (g = 1..T) optimizes the parameters of layers 0..g-1
    against the loss at the layer-g output, running
    ``batches_per_generation`` Adam updates on fresh mini-batches.  Layers
    beyond g keep their initial values until their generation arrives
    (their gradients are exactly zero, so Adam leaves them untouched).
    The optimizer state is reset at each generation boundary.
    """
    params = config.initial_params()
    root = RngStream(config.seed)
    log: list = []
    for generation in range(1, config.T + 1):
        state = AdamState.zeros(_flatten_params(params).size)
        for batch_index in range(config.batches_per_generation):
            H, x, y = _draw_minibatch(config, root.child(generation, batch_index))
            try:
                loss, acts = forward_unrolled(H, y, x, params, depth_used=generation)
                grads = backward_gradients(acts, params, x)
                params, state = adam_step(params, grads, state, config.learning_rate,
                                          beta1=config.adam_beta1, beta2=config.adam_beta2,
                                          eps=config.adam_epsilon)
            except (DetectorDivergenceError, FloatingPointError) as exc:
                raise TrainingDivergedError(generation, batch_index, params, str(exc)) from exc
            log.append((generation, batch_index, loss))
    return TrainingResult(params=params, loss_log=log, config=config)


# ---------------------------------------------------------------------------
# Parameter persistence
# ---------------------------------------------------------------------------

def save_params(params: Params, path, fingerprint: str = "") -> None:
    """Write trained parameters as a JSON document."""
    doc = params.to_dict()
    doc["config_fingerprint"] = fingerprint
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_params(path) -> Params:
    """Read a trained-parameter JSON document written by ``save_params``."""
    doc = json.loads(Path(path).read_text())
    if "beta" in doc:
        return ThsParams.from_dict(doc)
    if "gamma" in doc:
        return TpgParams.from_dict(doc)
    raise ValueError(f"{path}: not a recognized parameter document")
