"""MIMO signal detectors over the real-valued model y = Hx + w, x in {+1,-1}^N.

Implemented detectors:

* ``hs_detect`` -- Hubbard-Stratonovich detector: gradient iteration on the
  dual variable u with a fixed inverse temperature, s = tanh(beta * u).
* ``ths_detect`` -- trainable HS detector: same recursion with per-iteration
  scalars (beta_t, eta_t, zeta_t) meant to be learned by deep unfolding.
* ``scalable_tpg_detect`` / ``tpg_detect`` -- projected-gradient detectors
  with soft tanh projection; the scalable variant uses W = H^T, the full
  variant the regularized pseudo-inverse W = H^T (H H^T + alpha I)^{-1}.
* ``mmse_detect`` -- linear MMSE baseline.
* ``brute_force_ml_detect`` -- exhaustive maximum-likelihood oracle for
  small instances.

All iterative detectors start from the zero state and return soft outputs
in (-1, 1)^N plus the sign-thresholded hard decision (sign(0) := +1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

# Enumeration guard for the exhaustive ML oracle.
MAX_EXHAUSTIVE_BITS = 20

_ENUM_CHUNK = 1 << 16


class DetectorError(Exception):
    """Base class for detector failures."""


class DetectorDivergenceError(DetectorError):
    """An iterative detector produced a non-finite state."""

    def __init__(self, detector: str, iteration: int):
        self.detector = detector
        self.iteration = iteration
        super().__init__(f"{detector} detector diverged: non-finite state at iteration {iteration}")


class InstanceTooLargeError(DetectorError):
    """Exhaustive enumeration refused: 2^N hypotheses would be too many."""


class LinearSolveError(DetectorError):
    """A required linear solve hit a singular system."""


@dataclass
class ThsParams:
    """Per-iteration trainable scalars of the trainable HS detector.

    beta[t] is the inverse temperature of the tanh soft decision, eta[t]
    the gradient step size, zeta[t] the momentum weight on the dual state.
    """

    beta: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        self.zeta = np.asarray(self.zeta, dtype=float)
        if not (self.beta.shape == self.eta.shape == self.zeta.shape) or self.beta.ndim != 1:
            raise ValueError("beta, eta, zeta must be 1-d arrays of equal length")
        if self.beta.size < 1:
            raise ValueError("depth must be >= 1")
        if np.any(self.beta <= 0):
            raise ValueError("all beta values must be positive")

    @property
    def T(self) -> int:
        return self.beta.size

    @classmethod
    def initial(cls, T: int, eta: float = 0.01, beta: float = 1.0, zeta: float = 1.0) -> "ThsParams":
        """Untrained parameter set: constant initial values at every layer."""
        return cls(beta=np.full(T, beta), eta=np.full(T, eta), zeta=np.full(T, zeta))

    def to_dict(self) -> dict:
        return {
            "T": int(self.T),
            "beta": self.beta.tolist(),
            "eta": self.eta.tolist(),
            "zeta": self.zeta.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ThsParams":
        p = cls(beta=d["beta"], eta=d["eta"], zeta=d["zeta"])
        if "T" in d and int(d["T"]) != p.T:
            raise ValueError(f"declared depth {d['T']} does not match array length {p.T}")
        return p


@dataclass
class HsParams:
    """Fixed scalars of the untrained HS detector (shared across iterations)."""

    T: int
    eta: float = 0.1
    lam: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("depth must be >= 1")
        if self.lam <= 0 or self.beta <= 0:
            raise ValueError("lambda and beta must be positive")

    def as_ths(self) -> ThsParams:
        """Constant-parameter THS equivalent: (beta, eta, 1 + eta/lambda)."""
        return ThsParams.initial(self.T, eta=self.eta, beta=self.beta, zeta=1.0 + self.eta / self.lam)


@dataclass
class TpgParams:
    """Per-iteration scalars of the projected-gradient detectors.

    gamma[t] is the step size, theta[t] the softness of the tanh projection
    (soft decision tanh(r / |theta[t]|)).  ``variant`` selects the descent
    matrix: "scalable" uses W = H^T, "lmmse" uses
    W = H^T (H H^T + alpha I)^{-1} with regularizer ``alpha``.
    """

    gamma: np.ndarray
    theta: np.ndarray
    variant: str = "scalable"
    alpha: float = 1.0

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        if self.gamma.shape != self.theta.shape or self.gamma.ndim != 1:
            raise ValueError("gamma and theta must be 1-d arrays of equal length")
        if self.gamma.size < 1:
            raise ValueError("depth must be >= 1")
        if np.any(self.theta == 0):
            raise ValueError("theta values must be nonzero")
        if self.variant not in ("scalable", "lmmse"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "lmmse" and not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")

    @property
    def T(self) -> int:
        return self.gamma.size

    @classmethod
    def initial(cls, T: int, gamma: float = 0.01, theta: float = 1.0,
                variant: str = "scalable", alpha: float = 1.0) -> "TpgParams":
        return cls(gamma=np.full(T, gamma), theta=np.full(T, theta), variant=variant, alpha=alpha)

    def to_dict(self) -> dict:
        return {
            "T": int(self.T),
            "gamma": self.gamma.tolist(),
            "theta": self.theta.tolist(),
            "variant": self.variant,
            "alpha": float(self.alpha),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TpgParams":
        p = cls(gamma=d["gamma"], theta=d["theta"],
                variant=d.get("variant", "scalable"), alpha=float(d.get("alpha", 1.0)))
        if "T" in d and int(d["T"]) != p.T:
            raise ValueError(f"declared depth {d['T']} does not match array length {p.T}")
        return p


@dataclass
class DetectorTrace:
    """Per-iteration states of a traced detector run.

    ``u`` and ``s`` hold the T+1 states (row t = state after t iterations,
    row 0 the zero initialization).  ``gradient_amplitude[t]`` is
    G_t = ||H^T (y - H s_t)||_2 / N at state t, and ``bit_flip_ratio[t]``
    the fraction of sign flips from s_t to s_{t+1}.
    """

    u: np.ndarray  # (T+1, N)
    s: np.ndarray  # (T+1, N)
    gradient_amplitude: np.ndarray  # (T+1,)
    bit_flip_ratio: np.ndarray  # (T,)


@dataclass
class DetectionResult:
    soft: np.ndarray
    hard: np.ndarray
    trace: Optional[DetectorTrace] = None


def hard_decision(soft: np.ndarray) -> np.ndarray:
    """Elementwise sign with the fixed tie rule sign(0) := +1."""
    return np.where(np.asarray(soft) >= 0, 1.0, -1.0)


def _check_system(H: np.ndarray, y: np.ndarray) -> tuple:
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    if H.ndim != 2:
        raise ValueError(f"channel must be a matrix, got ndim={H.ndim}")
    M, N = H.shape
    if y.shape != (M,):
        raise ValueError(f"observation shape {y.shape} does not match channel rows {M}")
    return H, y, M, N


def _grad_amplitude(H: np.ndarray, y: np.ndarray, s: np.ndarray) -> float:
    return float(np.linalg.norm(H.T @ (y - H @ s))) / H.shape[1]


def _flip_fraction(s_prev: np.ndarray, s_next: np.ndarray) -> float:
    return float(np.mean(hard_decision(s_prev) != hard_decision(s_next)))


class _TraceRecorder:
    """Collects (u_t, s_t) states and derived diagnostics during detection."""

    def __init__(self, H, y, T, N):
        self.H, self.y = H, y
        self.u = np.zeros((T + 1, N))
        self.s = np.zeros((T + 1, N))
        self.G = np.zeros(T + 1)
        self.flips = np.zeros(T)
        self.G[0] = _grad_amplitude(H, y, self.s[0])

    def record(self, t, u, s):
        self.u[t] = u
        self.s[t] = s
        self.G[t] = _grad_amplitude(self.H, self.y, s)
        self.flips[t - 1] = _flip_fraction(self.s[t - 1], s)

    def build(self) -> DetectorTrace:
        return DetectorTrace(u=self.u, s=self.s, gradient_amplitude=self.G,
                             bit_flip_ratio=self.flips)


def ths_step(u, s, H, y, beta_t: float, eta_t: float, zeta_t: float):
    """One trainable-HS update.

    u_next = zeta_t * u + eta_t * H^T (y - H s)
    s_next = tanh(beta_t * u_next)
    """
    H, y, M, N = _check_system(H, y)
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    if u.shape != (N,) or s.shape != (N,):
        raise ValueError(f"state shapes {u.shape}/{s.shape} do not match channel width {N}")
    u_next = zeta_t * u + eta_t * (H.T @ (y - H @ s))
    s_next = np.tanh(beta_t * u_next)
    return u_next, s_next


def ths_detect(H, y, params: ThsParams, trace: bool = False) -> DetectionResult:
    """Run the trainable HS detector for params.T iterations from the zero state."""
    H, y, M, N = _check_system(H, y)
    u = np.zeros(N)
    s = np.zeros(N)
    rec = _TraceRecorder(H, y, params.T, N) if trace else None
    with np.errstate(over="ignore", invalid="ignore"):  # guarded explicitly below
        for t in range(params.T):
            u = params.zeta[t] * u + params.eta[t] * (H.T @ (y - H @ s))
            if not np.all(np.isfinite(u)):
                raise DetectorDivergenceError("ths", t)
            s = np.tanh(params.beta[t] * u)
            if rec is not None:
                rec.record(t + 1, u, s)
    return DetectionResult(soft=s, hard=hard_decision(s),
                           trace=rec.build() if rec is not None else None)


def hs_detect(H, y, params: HsParams, trace: bool = False) -> DetectionResult:
    """Run the fixed-parameter HS detector.

    u_{t+1} = (1 + eta/lambda) u_t + eta H^T (y - H s_t)
    s_{t+1} = tanh(beta * u_{t+1})
    """
    H, y, M, N = _check_system(H, y)
    momentum = 1.0 + params.eta / params.lam
    u = np.zeros(N)
    s = np.zeros(N)
    rec = _TraceRecorder(H, y, params.T, N) if trace else None
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(params.T):
            u = momentum * u + params.eta * (H.T @ (y - H @ s))
            if not np.all(np.isfinite(u)):
                raise DetectorDivergenceError("hs", t)
            s = np.tanh(params.beta * u)
            if rec is not None:
                rec.record(t + 1, u, s)
    return DetectionResult(soft=s, hard=hard_decision(s),
                           trace=rec.build() if rec is not None else None)


def _tpg_iterate(H, y, W, params: TpgParams, trace: bool, name: str) -> DetectionResult:
    """Shared projected-gradient loop: r_t = s_t + gamma_t W (y - H s_t),
    s_{t+1} = tanh(r_t / |theta_t|), s_0 = 0.  Soft output is the last s.

    The trace's u-slots hold the pre-projection search points r_t.
    """
    M, N = H.shape
    s = np.zeros(N)
    rec = _TraceRecorder(H, y, params.T, N) if trace else None
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(params.T):
            r = s + params.gamma[t] * (W @ (y - H @ s))
            if not np.all(np.isfinite(r)):
                raise DetectorDivergenceError(name, t)
            s = np.tanh(r / abs(params.theta[t]))
            if rec is not None:
                rec.record(t + 1, r, s)
    return DetectionResult(soft=s, hard=hard_decision(s),
                           trace=rec.build() if rec is not None else None)


def scalable_tpg_detect(H, y, params: TpgParams, trace: bool = False) -> DetectionResult:
    """Projected-gradient detector with the inversion-free matrix W = H^T."""
    if params.variant != "scalable":
        raise ValueError(f"expected scalable variant, got {params.variant!r}")
    H, y, M, N = _check_system(H, y)
    return _tpg_iterate(H, y, H.T, params, trace, "scalable_tpg")


def lmmse_like_matrix(H: np.ndarray, alpha: float) -> np.ndarray:
    """W = H^T (H H^T + alpha I)^{-1}, the regularized pseudo-inverse."""
    H = np.asarray(H, dtype=float)
    M = H.shape[0]
    A = H @ H.T + alpha * np.eye(M)
    try:
        return np.linalg.solve(A, H).T
    except np.linalg.LinAlgError as exc:
        raise LinearSolveError(f"H H^T + {alpha} I is singular") from exc


def tpg_detect(H, y, sigma2: float, params: TpgParams, trace: bool = False) -> DetectionResult:
    """Projected-gradient detector with the LMMSE-like matrix, computed once.

    ``sigma2`` is accepted for a uniform detector signature; the descent
    matrix is regularized by ``params.alpha``, not by the noise level.
    """
    if params.variant != "lmmse":
        raise ValueError(f"expected lmmse variant, got {params.variant!r}")
    H, y, M, N = _check_system(H, y)
    W = lmmse_like_matrix(H, params.alpha)
    return _tpg_iterate(H, y, W, params, trace, "tpg")


def mmse_detect(H, y, sigma2: float) -> DetectionResult:
    """Linear MMSE baseline: soft = H^T (H H^T + (sigma2/2) I)^{-1} y.

    sigma2/2 is the per-real-component noise variance; symbols have unit
    energy per real dimension.
    """
    H, y, M, N = _check_system(H, y)
    A = H @ H.T + (sigma2 / 2.0) * np.eye(M)
    try:
        soft = H.T @ np.linalg.solve(A, y)
    except np.linalg.LinAlgError as exc:
        raise LinearSolveError("MMSE solve hit a singular system") from exc
    return DetectionResult(soft=soft, hard=hard_decision(soft))


def ml_objective(H, y, x) -> float:
    """Least-squares detection objective 0.5 * ||y - Hx||^2."""
    H = np.asarray(H, dtype=float)
    return 0.5 * float(np.sum((np.asarray(y) - H @ np.asarray(x, dtype=float)) ** 2))


def hypercube_vertices(N: int, start: int, stop: int) -> np.ndarray:
    """Rows start..stop-1 of the lexicographic {+1,-1}^N enumeration.

    Row k maps the bits of k (MSB first) to symbols via 0 -> +1, 1 -> -1,
    so ascending k is lexicographic order with +1 before -1.
    """
    ks = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (ks >> (N - 1 - np.arange(N, dtype=np.int64))) & 1
    return 1.0 - 2.0 * bits.astype(float)


def brute_force_ml_detect(H, y) -> DetectionResult:
    """Exhaustive maximum-likelihood detection: argmin over {+1,-1}^N of
    0.5 ||y - Hx||^2.

    Ties break toward the lexicographically smallest vector (+1 before -1).
    Guarded to N <= MAX_EXHAUSTIVE_BITS.
    """
    H, y, M, N = _check_system(H, y)
    if N > MAX_EXHAUSTIVE_BITS:
        raise InstanceTooLargeError(
            f"enumeration over 2^{N} hypotheses refused (limit N <= {MAX_EXHAUSTIVE_BITS})")
    best_val = np.inf
    best_x = None
    for start in range(0, 1 << N, _ENUM_CHUNK):
        X = hypercube_vertices(N, start, min(start + _ENUM_CHUNK, 1 << N))
        resid = y[None, :] - X @ H.T
        vals = 0.5 * np.einsum("ij,ij->i", resid, resid)
        k = int(np.argmin(vals))  # first minimum = lexicographically smallest
        if vals[k] < best_val:
            best_val = float(vals[k])
            best_x = X[k].copy()
    return DetectionResult(soft=best_x, hard=best_x.copy())
