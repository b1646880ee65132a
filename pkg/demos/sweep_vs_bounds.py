"""
Simulated worst-case delay against the bounds
=============================================

Each grid point runs bursts of ``n`` packets at a given load through a server
calibrated for that packet length, then compares the largest observed delay
with the ideal transmission time and the three bounds.
"""

from delaybound import simulator
from delaybound.trace_io import load_reference

# %%
ref = load_reference()
servers = {lb: simulator.ServerConfig(R, e, p_in=0.96e9) for lb, (R, e) in ref.service.items()}
grid = [(lb, load, n) for lb in (256, 1500) for load in (0.2, 0.8, 1.0) for n in (1, 3, 8)]
rows = simulator.max_delay_sweep(grid, servers)

# %%
# Delays in microseconds.  Points the sender cannot produce are marked.
print(f"{'len':>5} {'load':>5} {'n':>2} {'sim':>7} {'ideal':>7} {'A':>7} {'C':>7}")
for r in rows:
    if "sim" in r.errors:
        print(f"{r.length_bytes:>5} {r.load:>5} {r.n:>2}   infeasible at this load")
        continue
    vals = [r.max_delay, r.bound("ideal"), r.bound("a"), r.bound("c")]
    print(f"{r.length_bytes:>5} {r.load:>5} {r.n:>2} " + " ".join(f"{v * 1e6:7.2f}" for v in vals))
