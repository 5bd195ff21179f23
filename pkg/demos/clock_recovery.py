"""
Recovering the clock offset between stations
============================================

Two stations record the same 100 kHz sync pulses with their own clocks.
Station 2 runs 2.7 us ahead and gains 3 ps every second. A least-squares
fit over matched pulses recovers both, and the fit residual shows the
combined timing jitter.
"""

import numpy as np

from satentangle.timesync import fit_clock

rng = np.random.default_rng(1)
true = np.arange(0, 200.0, 1e-5) * 1e12  # ps
jitter = 545.0  # per station

t1 = np.rint(true + rng.normal(0, jitter, true.size)).astype(np.int64)
t2 = np.rint(true + 2718281.0 + 3.0 * true / 1e12 + rng.normal(0, jitter, true.size)).astype(np.int64)

fit = fit_clock(t1, t2)
print(f"offset {fit.offset:.1f} ps, drift {fit.drift:.4f} ps/s, residual {fit.residual_rms:.1f} ps")
print(f"expected residual {jitter * np.sqrt(2):.1f} ps")
