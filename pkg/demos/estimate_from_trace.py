"""
Recovering server parameters from a packet trace
================================================

We simulate a FIFO server with known rate and latency, keep only the
arrival and departure instants, and estimate the rate-latency service curve
back from them.  Then the IO delay of the capture host is added on top.
"""

from delaybound import estimator, models, simulator
from delaybound.trace_io import default_io_table

# %%
# A measured trace
# ----------------
flow = models.real_source_from_load(8 * 256, 3, 0.8, 1e9, 0.96e9)
arrivals = simulator.generate_arrivals(simulator.SourceConfig("real_source", 10_000), flow)
truth = simulator.ServerConfig(R=0.9e9, e_proc=4.2e-6, p_in=0.96e9, jitter=50e-9, seed=1)
trace = simulator.simulate(arrivals, truth).trace
print(f"{len(trace)} packets over {trace.departure[-1] * 1e3:.2f} ms")

# %%
# Estimation
# ----------
# The search lowers R from the nominal rate until the slack of every packet
# against its virtual finishing time stops growing within a busy period.
res = estimator.estimate(trace, C=1e9)
print(f"R_hat = {res.R_hat / 1e9:.4f} Gbit/s  (true 0.9)")
print(f"e_hat = {res.e_hat * 1e6:.3f} us  (true 4.2, jitter 0.05)")
print(f"accepted after {res.iterations} probes, step {res.step:.0f} bit/s")

# %%
# Adding the IO delay of the capture host
# ---------------------------------------
corrected = estimator.apply_io_correction(res, default_io_table(), 256)
print(f"e with IO delay = {corrected.e_with_io * 1e6:.3f} us")
