"""Training the per-iteration scalars by deep unfolding, desk-size edition.

Unrolls the THS recursion, backpropagates the MSE loss through it by hand,
and optimizes with Adam using incremental deepening: generation g trains
the first g layers against the layer-g output.  A (10, 7) system keeps
this under a minute; the full benchmark uses the CLI.
"""

import numpy as np

from hsmimo import (
    RngStream,
    SystemDims,
    ThsParams,
    TrainingConfig,
    estimate_ber_paired,
    incremental_train,
    make_hs_detector,
    make_ths_detector,
)
from hsmimo.detectors import HsParams

dims = SystemDims(n=10, m=7)
config = TrainingConfig(dims=dims, snr_schedule=(16.0,), T=15,
                        batches_per_generation=100, batch_size=100,
                        learning_rate=1e-3, seed=11)
print(f"training THS on ({dims.n},{dims.m}) at 16 dB, T={config.T}, "
      f"{config.batches_per_generation} batches x {config.batch_size} per generation")

result = incremental_train(config)
by_gen = {}
for g, b, loss in result.loss_log:
    by_gen.setdefault(g, []).append(loss)
for g in (1, 5, 10, 15):
    print(f"  generation {g:2d}: mean loss {np.mean(by_gen[g]):.4f}")

p = result.params
print(f"\ntrained parameter ranges: beta [{p.beta.min():.3f}, {p.beta.max():.3f}], "
      f"eta [{p.eta.min():.3f}, {p.eta.max():.3f}], "
      f"zeta [{p.zeta.min():.3f}, {p.zeta.max():.3f}]")

detectors = [
    make_ths_detector(p, name="ths trained"),
    make_ths_detector(ThsParams.initial(config.T), name="ths initial"),
    make_hs_detector(HsParams(T=config.T, eta=0.1, lam=1.0, beta=1.0), name="hs"),
]
points = estimate_ber_paired(detectors, dims, 16.0, 3000, RngStream(99))
print("\npaired BER at 16 dB (same channels, signals, and noise):")
for name, pt in points.items():
    print(f"  {name:>12s}: {pt.ber:.4e}  ({pt.bit_errors}/{pt.bits_tested} bits)")
