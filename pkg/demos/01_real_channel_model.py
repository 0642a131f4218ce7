"""From complex Rayleigh fading to the real-valued detection problem.

Walks through the system model: draw a complex channel, map it to the
real block form, pick a QPSK signal, and transmit at a chosen SNR.
"""

import numpy as np

from hsmimo import (
    NoiseModel,
    RngStream,
    SystemDims,
    realify_channel,
    realify_vector,
    sample_channel,
    sample_signal,
    snr_to_sigma2,
    transmit,
)

# An overloaded system: more transmit than receive antennas, so detection
# is an underdetermined inverse problem.
dims = SystemDims(n=6, m=4)
print(f"system: n={dims.n} tx, m={dims.m} rx -> real model N={dims.N}, M={dims.M}, "
      f"overloaded={dims.overloaded}")

rng = RngStream(seed=7)
hc = sample_channel(dims, rng)
print(f"\ncomplex channel: {hc.shape}, E|h|^2 ~ {np.mean(np.abs(hc) ** 2):.3f} (unit on average)")

# The real equivalent stacks Re/Im parts into a 2m x 2n block matrix.
H = realify_channel(hc)
print(f"real channel: {H.shape}")
print("block identities: top-left == bottom-right:",
      np.array_equal(H[:dims.m, :dims.n], H[dims.m:, dims.n:]),
      "| top-right == -bottom-left:",
      np.array_equal(H[:dims.m, dims.n:], -H[dims.m:, :dims.n]))

# Realifying commutes with complex multiplication.
xc = np.array([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j, 1 + 1j, -1 - 1j])
print("realify(H) @ realify(x) == realify(H x):",
      np.allclose(realify_channel(hc) @ realify_vector(xc), realify_vector(hc @ xc)))

# SNR convention: SNR = 10 log10(n / sigma_w^2).
for snr_db in (0.0, 10.0, 20.0):
    print(f"SNR {snr_db:5.1f} dB -> complex noise variance {snr_to_sigma2(snr_db, dims.n):.4f}")

# One transmission: y = Hx + w with per-real-component variance sigma^2/2.
x = sample_signal(dims, rng.child(1))
noise = NoiseModel.from_snr(15.0, dims.n)
sample = transmit(H, x, noise, rng.child(2))
print(f"\ntransmitted x (first 6): {x[:6]}")
print(f"received y (first 6):    {np.round(sample.y[:6], 3)}")
print(f"noise per real component: {noise.per_real_component_variance:.4f}")
