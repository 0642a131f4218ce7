"""Monte Carlo BER estimation, convergence diagnostics, and validators.

BER runs draw independent (channel, signal, noise) triples from dedicated
substreams, so results are bit-reproducible for a fixed (seed, stream) and
independent of the worker-thread count.  When several detectors are
evaluated together they see identical samples (paired comparison).

Also houses two numerical self-checks of the math the HS detector rests
on: the Gaussian-integral identity exp(-a x^2 / 2) =
Re \\int (2 pi a)^{-1/2} exp(-z^2/(2a) - i x z) dz, and the factorization
of the hypercube expectation E[x_i] = tanh(beta (H^T v)_i) verified by
exhaustive enumeration.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .detectors import (
    DetectionResult,
    DetectorDivergenceError,
    HsParams,
    InstanceTooLargeError,
    ThsParams,
    TpgParams,
    brute_force_ml_detect,
    hard_decision,
    hs_detect,
    hypercube_vertices,
    mmse_detect,
    scalable_tpg_detect,
    ths_detect,
    tpg_detect,
)
from .system_model import NoiseModel, RngStream, SystemDims, realify_channel, sample_channel, sample_signal, transmit

SCHEMA_VERSION = 1

# Substream domains inside one evaluation run.
_CHAN, _SIG, _NOISE = 0, 1, 2

# Fixed Monte Carlo chunk size: the chunk decomposition (and with it every
# floating-point reduction order) must not depend on the thread count.
_MC_CHUNK = 64


class ValidationError(Exception):
    """A mathematical self-check exceeded its tolerance."""


# ---------------------------------------------------------------------------
# Detector wrappers
# ---------------------------------------------------------------------------

@dataclass
class Detector:
    """A named, runnable detector for Monte Carlo evaluation.

    ``run(H, y, sigma2, trace=False)`` must return a DetectionResult.
    """

    name: str
    run: Callable
    depth: Optional[int] = None
    traceable: bool = True
    param_fingerprint: str = ""


def make_ths_detector(params: ThsParams, name: str = "ths", fingerprint: str = "") -> Detector:
    def run(H, y, sigma2, trace=False):
        return ths_detect(H, y, params, trace=trace)
    return Detector(name=name, run=run, depth=params.T, param_fingerprint=fingerprint)


def make_hs_detector(params: HsParams, name: str = "hs") -> Detector:
    def run(H, y, sigma2, trace=False):
        return hs_detect(H, y, params, trace=trace)
    return Detector(name=name, run=run, depth=params.T)


def make_scalable_tpg_detector(params: TpgParams, name: str = "scalable_tpg",
                               fingerprint: str = "") -> Detector:
    def run(H, y, sigma2, trace=False):
        return scalable_tpg_detect(H, y, params, trace=trace)
    return Detector(name=name, run=run, depth=params.T, param_fingerprint=fingerprint)


def make_tpg_detector(params: TpgParams, name: str = "tpg", fingerprint: str = "") -> Detector:
    def run(H, y, sigma2, trace=False):
        return tpg_detect(H, y, sigma2, params, trace=trace)
    return Detector(name=name, run=run, depth=params.T, param_fingerprint=fingerprint)


def make_mmse_detector(name: str = "mmse") -> Detector:
    def run(H, y, sigma2, trace=False):
        if trace:
            raise ValueError("mmse detector does not support tracing")
        return mmse_detect(H, y, sigma2)
    return Detector(name=name, run=run, traceable=False)


def make_ml_detector(name: str = "ml") -> Detector:
    def run(H, y, sigma2, trace=False):
        if trace:
            raise ValueError("ml detector does not support tracing")
        return brute_force_ml_detect(H, y)
    return Detector(name=name, run=run, traceable=False)


# ---------------------------------------------------------------------------
# BER estimation
# ---------------------------------------------------------------------------

@dataclass
class BerPoint:
    """BER estimate at one SNR: error counts plus a 95% normal-approximation CI."""

    snr_db: float
    detector: str
    bits_tested: int
    bit_errors: int
    ber: float
    ci_half_width: float
    num_vectors: int
    diverged_vectors: int = 0

    @classmethod
    def from_counts(cls, snr_db, detector, bits_tested, bit_errors, num_vectors,
                    diverged_vectors=0) -> "BerPoint":
        p = bit_errors / bits_tested
        ci = 1.96 * math.sqrt(p * (1.0 - p) / bits_tested)
        return cls(snr_db=float(snr_db), detector=detector, bits_tested=int(bits_tested),
                   bit_errors=int(bit_errors), ber=p, ci_half_width=ci,
                   num_vectors=int(num_vectors), diverged_vectors=int(diverged_vectors))


@dataclass
class BerCurve:
    """BER-vs-SNR curve of one detector on one system size."""

    detector: str
    n: int
    m: int
    depth: Optional[int]
    seed: int
    stream_id: int
    points: list = field(default_factory=list)
    param_fingerprint: str = ""
    timestamp: Optional[str] = None  # None keeps report files byte-reproducible

    def __post_init__(self):
        snrs = [p.snr_db for p in self.points]
        if any(b <= a for a, b in zip(snrs, snrs[1:])):
            raise ValueError("SNR values must be strictly increasing")
        if any(p.detector != self.detector for p in self.points):
            raise ValueError("all points must share the curve's detector id")


def _mc_chunks(num_vectors: int):
    return [range(lo, min(lo + _MC_CHUNK, num_vectors)) for lo in range(0, num_vectors, _MC_CHUNK)]


def _run_chunks(worker, chunks, threads: int):
    """Map worker over chunks, preserving chunk order in the result list."""
    if threads <= 1 or len(chunks) <= 1:
        return [worker(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, chunks))


def _draw_vector_sample(dims, noise, rng, i, channel_block):
    H = realify_channel(sample_channel(dims, rng.child(_CHAN, i // channel_block)))
    x = sample_signal(dims, rng.child(_SIG, i))
    return transmit(H, x, noise, rng.child(_NOISE, i))


def estimate_ber_paired(detectors: Sequence[Detector], dims: SystemDims, snr_db: float,
                        num_vectors: int, rng: RngStream, channel_block: int = 1,
                        threads: int = 1) -> dict:
    """BER of several detectors on identical samples at one SNR.

    Draws ``num_vectors`` independent (channel, x, noise) triples -- a
    fresh channel every ``channel_block`` vectors -- and counts
    hard-decision bit errors.  A diverging detector scores the whole
    vector as erroneous and is tallied in ``diverged_vectors``.
    """
    if num_vectors < 1:
        raise ValueError("num_vectors must be >= 1")
    if channel_block < 1:
        raise ValueError("channel_block must be >= 1")
    noise = NoiseModel.from_snr(snr_db, dims.n)

    def worker(chunk):
        errors = [0] * len(detectors)
        diverged = [0] * len(detectors)
        for i in chunk:
            sample = _draw_vector_sample(dims, noise, rng, i, channel_block)
            for k, det in enumerate(detectors):
                try:
                    result = det.run(sample.channel, sample.y, noise.sigma2)
                    errors[k] += int(np.sum(result.hard != sample.x))
                except DetectorDivergenceError:
                    errors[k] += dims.N
                    diverged[k] += 1
        return errors, diverged

    partials = _run_chunks(worker, _mc_chunks(num_vectors), threads)
    bits = dims.N * num_vectors
    out = {}
    for k, det in enumerate(detectors):
        errs = sum(p[0][k] for p in partials)
        divs = sum(p[1][k] for p in partials)
        out[det.name] = BerPoint.from_counts(snr_db, det.name, bits, errs, num_vectors, divs)
    return out


def estimate_ber(detector: Detector, dims: SystemDims, snr_db: float, num_vectors: int,
                 rng: RngStream, channel_block: int = 1, threads: int = 1) -> BerPoint:
    """BER of a single detector at one SNR (see estimate_ber_paired)."""
    return estimate_ber_paired([detector], dims, snr_db, num_vectors, rng,
                               channel_block=channel_block, threads=threads)[detector.name]


def sweep_ber_paired(detectors: Sequence[Detector], dims: SystemDims, snr_grid_db: Sequence[float],
                     num_vectors: int, rng: RngStream, channel_block: int = 1,
                     threads: int = 1) -> dict:
    """One BerCurve per detector over an increasing SNR grid, with shared
    samples per point (independent substream per SNR point)."""
    grid = [float(s) for s in snr_grid_db]
    if not grid:
        raise ValueError("SNR grid must not be empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("SNR grid must be strictly increasing")
    curves = {det.name: BerCurve(detector=det.name, n=dims.n, m=dims.m, depth=det.depth,
                                 seed=rng.seed, stream_id=rng.stream_id,
                                 param_fingerprint=det.param_fingerprint)
              for det in detectors}
    for p, snr_db in enumerate(grid):
        points = estimate_ber_paired(detectors, dims, snr_db, num_vectors, rng.child(p),
                                     channel_block=channel_block, threads=threads)
        for det in detectors:
            curves[det.name].points.append(points[det.name])
    return curves


def sweep_ber(detector: Detector, dims: SystemDims, snr_grid_db: Sequence[float],
              num_vectors: int, rng: RngStream, channel_block: int = 1,
              threads: int = 1) -> BerCurve:
    return sweep_ber_paired([detector], dims, snr_grid_db, num_vectors, rng,
                            channel_block=channel_block, threads=threads)[detector.name]


# ---------------------------------------------------------------------------
# Convergence diagnostics
# ---------------------------------------------------------------------------

def gradient_amplitude(H, y, s) -> float:
    """G = ||H^T (y - H s)||_2 / N; zero exactly at a consistent solution."""
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    M, N = H.shape
    if y.shape != (M,) or s.shape != (N,):
        raise ValueError("shapes do not match the channel")
    return float(np.linalg.norm(H.T @ (y - H @ s))) / N


def bit_flip_ratio(s_prev, s_next) -> float:
    """Fraction of indices whose hard decision flips between two soft states."""
    s_prev = np.asarray(s_prev)
    s_next = np.asarray(s_next)
    if s_prev.shape != s_next.shape:
        raise ValueError(f"shape mismatch: {s_prev.shape} vs {s_next.shape}")
    return float(np.mean(hard_decision(s_prev) != hard_decision(s_next)))


@dataclass
class DiagnosticsRecord:
    """Ensemble-averaged per-iteration diagnostics of a traced detector.

    Index t of the arrays corresponds to iteration t+1 (iterations 1..T).
    """

    detector: str
    mean_gradient_amplitude: np.ndarray  # (T,)
    mean_bit_flip_ratio: np.ndarray  # (T,)
    ensemble: int
    noiseless: bool
    snr_db: Optional[float] = None

    @property
    def depth(self) -> int:
        return self.mean_gradient_amplitude.size


def run_diagnostics(detector: Detector, dims: SystemDims, ensemble: int, noiseless: bool,
                    rng: RngStream, snr_db: Optional[float] = None,
                    threads: int = 1) -> DiagnosticsRecord:
    """Average per-iteration G_t and bit-flip ratio over a signal ensemble.

    Every signal gets a fresh channel.  ``noiseless`` forces sigma_w^2 = 0;
    otherwise ``snr_db`` sets the noise level.
    """
    if not detector.traceable:
        raise ValueError(f"detector {detector.name!r} does not support tracing")
    if ensemble < 1:
        raise ValueError("ensemble must be >= 1")
    if noiseless:
        noise = NoiseModel.noiseless()
    else:
        if snr_db is None:
            raise ValueError("snr_db required when not noiseless")
        noise = NoiseModel.from_snr(snr_db, dims.n)

    def worker(chunk):
        g_sum = None
        flip_sum = None
        for i in chunk:
            sample = _draw_vector_sample(dims, noise, rng, i, channel_block=1)
            result = detector.run(sample.channel, sample.y, noise.sigma2, trace=True)
            tr = result.trace
            if g_sum is None:
                g_sum = np.zeros(tr.bit_flip_ratio.size)
                flip_sum = np.zeros(tr.bit_flip_ratio.size)
            g_sum += tr.gradient_amplitude[1:]
            flip_sum += tr.bit_flip_ratio
        return g_sum, flip_sum

    partials = _run_chunks(worker, _mc_chunks(ensemble), threads)
    g_total = partials[0][0].copy()
    flip_total = partials[0][1].copy()
    for g_part, flip_part in partials[1:]:
        g_total += g_part
        flip_total += flip_part
    return DiagnosticsRecord(detector=detector.name,
                             mean_gradient_amplitude=g_total / ensemble,
                             mean_bit_flip_ratio=flip_total / ensemble,
                             ensemble=ensemble, noiseless=noiseless,
                             snr_db=None if noiseless else snr_db)


# ---------------------------------------------------------------------------
# Mathematical validators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureConfig:
    """Trapezoidal rule setup for the Gaussian-integral identity check.

    The integration range is +/- half_width_sigmas standard deviations of
    the Gaussian factor (std sqrt(a)) unless ``half_width`` overrides it.
    """

    half_width_sigmas: float = 12.0
    num_points: int = 200_000
    half_width: Optional[float] = None


@dataclass
class HsIdentityResult:
    a: float
    x: float
    lhs: float
    integral_real: float
    integral_imag: float
    residual: float


def verify_hs_identity(a: float, x: float,
                       quadrature: Optional[QuadratureConfig] = None) -> HsIdentityResult:
    """Check exp(-a x^2 / 2) against the oscillatory Gaussian integral.

    Numerically integrates (2 pi a)^{-1/2} exp(-z^2/(2a) - i x z) by the
    trapezoidal rule and returns |Re(integral) - exp(-a x^2 / 2)| together
    with both integral parts.  An under-resolved setup only warns; the
    residual is still returned.
    """
    if a <= 0:
        raise ValueError(f"a must be positive, got {a}")
    quad = quadrature or QuadratureConfig()
    half_width = quad.half_width if quad.half_width is not None else quad.half_width_sigmas * math.sqrt(a)
    if half_width < 10.0 * math.sqrt(a):
        warnings.warn(f"quadrature range +/-{half_width:.3g} is below 10 standard deviations "
                      f"of the Gaussian factor; residual may be inflated")
    dz = 2.0 * half_width / (quad.num_points - 1)
    if abs(x) * dz > 0.1:
        warnings.warn(f"quadrature step {dz:.3g} under-resolves the oscillation at x={x}")
    z = np.linspace(-half_width, half_width, quad.num_points)
    integrand = np.exp(-z ** 2 / (2.0 * a) - 1j * x * z) / math.sqrt(2.0 * math.pi * a)
    integral = np.trapezoid(integrand, z)
    lhs = math.exp(-a * x ** 2 / 2.0)
    return HsIdentityResult(a=a, x=x, lhs=lhs,
                            integral_real=float(integral.real),
                            integral_imag=float(integral.imag),
                            residual=abs(float(integral.real) - lhs))


def brute_force_expectation(H, v, beta: float, tol: Optional[float] = 1e-10) -> np.ndarray:
    """Hypercube expectation E[x_i] under weights exp(beta v^T H x), by
    exhaustive enumeration with max-shifted (log-sum-exp) stabilization.

    The weights factorize over coordinates, so the result must equal
    tanh(beta (H^T v)) elementwise; if ``tol`` is given, a larger deviation
    raises ValidationError.  Guarded to N <= 16.
    """
    H = np.asarray(H, dtype=float)
    v = np.asarray(v, dtype=float)
    M, N = H.shape
    if v.shape != (M,):
        raise ValueError(f"v shape {v.shape} does not match channel rows {M}")
    if N > 16:
        raise InstanceTooLargeError(f"enumeration over 2^{N} configurations refused (limit N <= 16)")
    u = H.T @ v
    X = hypercube_vertices(N, 0, 1 << N)
    t = beta * (X @ u)
    w = np.exp(t - t.max())  # shift by the max exponent before summing
    expectation = (X.T @ w) / w.sum()
    if tol is not None:
        closed_form = np.tanh(beta * u)
        resid = float(np.max(np.abs(expectation - closed_form)))
        if resid > tol:
            raise ValidationError(
                f"enumerated expectation deviates from tanh(beta H^T v) by {resid:.3e} > {tol:.1e}")
    return expectation


# ---------------------------------------------------------------------------
# Report persistence
# ---------------------------------------------------------------------------

def _point_to_dict(p: BerPoint) -> dict:
    return {
        "snr_db": p.snr_db,
        "detector": p.detector,
        "bits_tested": p.bits_tested,
        "bit_errors": p.bit_errors,
        "ber": p.ber,
        "ci_half_width": p.ci_half_width,
        "num_vectors": p.num_vectors,
        "diverged_vectors": p.diverged_vectors,
    }


def _curve_to_dict(c: BerCurve) -> dict:
    return {
        "detector": c.detector,
        "n": c.n,
        "m": c.m,
        "depth": c.depth,
        "seed": c.seed,
        "stream_id": c.stream_id,
        "param_fingerprint": c.param_fingerprint,
        "timestamp": c.timestamp,
        "points": [_point_to_dict(p) for p in c.points],
    }


def write_report(curves: Sequence[BerCurve], path_stem) -> tuple:
    """Persist BER curves as ``<stem>.csv`` (one row per point) and
    ``<stem>.json`` (full metadata).  Returns the two paths."""
    import csv
    import json

    stem = Path(path_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path = stem.with_suffix(".csv")
    json_path = stem.with_suffix(".json")
    try:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["schema_version", "detector", "n", "m", "T", "snr_db",
                             "bits", "errors", "ber", "ci"])
            for c in curves:
                for p in c.points:
                    writer.writerow([SCHEMA_VERSION, c.detector, c.n, c.m,
                                     c.depth if c.depth is not None else "",
                                     p.snr_db, p.bits_tested, p.bit_errors, p.ber,
                                     p.ci_half_width])
        doc = {"schema_version": SCHEMA_VERSION, "curves": [_curve_to_dict(c) for c in curves]}
        json_path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing report to {stem}.*: {exc}") from exc
    return csv_path, json_path


def read_report(json_path) -> list:
    """Rebuild BerCurve records from a JSON report written by write_report."""
    import json

    doc = json.loads(Path(json_path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema version {doc.get('schema_version')}")
    curves = []
    for cd in doc["curves"]:
        points = [BerPoint(**pd) for pd in cd["points"]]
        curves.append(BerCurve(detector=cd["detector"], n=cd["n"], m=cd["m"], depth=cd["depth"],
                               seed=cd["seed"], stream_id=cd["stream_id"], points=points,
                               param_fingerprint=cd["param_fingerprint"],
                               timestamp=cd["timestamp"]))
    return curves


def write_diagnostics(records: Sequence[DiagnosticsRecord], path_stem) -> Path:
    """Persist diagnostics as CSV: one row per (detector, iteration)."""
    import csv

    stem = Path(path_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path = stem.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["schema_version", "detector", "iteration",
                         "mean_gradient_amplitude", "mean_bit_flip_ratio"])
        for rec in records:
            for t in range(rec.depth):
                writer.writerow([SCHEMA_VERSION, rec.detector, t + 1,
                                 rec.mean_gradient_amplitude[t], rec.mean_bit_flip_ratio[t]])
    return csv_path
