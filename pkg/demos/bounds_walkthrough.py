"""
Delay bounds for one flow through one server
============================================

A 256 B packet flow with bursts of three packets crosses a server with
rate 0.9 Gbit/s and a 4.2 us fixed latency.  We compare the classic token
bucket bound with the tighter bounds that know about the link speed and the
source spacing, and check each one against the exact horizontal deviation.
"""

import numpy as np

from delaybound import curves, models

# %%
# The server and the flow
# -----------------------
server = models.RateLatencyServer(R=0.9e9, e=4.2e-6, C=1e9)
l = 8 * 256
tb = models.TokenBucketFlow(r=0.5e9, b=3 * l)
four = models.FourTupleFlow(p=1e9, l=l, r=0.5e9, b=3 * l)

# %%
# Closed forms against the numeric deviation
# ------------------------------------------
for name, flow, fn in [("token bucket", tb, models.token_bucket_bound),
                       ("link-aware", four, models.model_a_bound)]:
    closed = fn(flow, server)
    exact = curves.horizontal_deviation(models.curve_of(flow), models.service_curve(server))
    print(f"{name:>13}: {closed.value * 1e6:7.3f} us  (numeric {exact.value * 1e6:7.3f} us)")
    for term, value in closed.components.items():
        print(f"{'':>15}{term:<13}{value * 1e6:+8.3f} us")

# %%
# The source spacing
# ------------------
# A sender limited to 0.96 Gbit/s spaces packets tau = l / r_p apart, so the
# arrival curve bends at (n - 1) tau.
src = models.real_source_from_load(l, 3, 0.5, 1e9, 0.96e9)
c = models.model_c_bound(src, server)
print(f"kink at {src.kink_t * 1e6:.3f} us with {src.kink_value:.0f} bits; "
      f"bound {c.value * 1e6:.3f} us")

# %%
# Sampling the curves shows where each one sits.
t = np.linspace(0, 2e-5, 6)
for label, curve in [("token bucket", models.curve_of(tb)),
                     ("source", models.curve_of(src)),
                     ("service", models.service_curve(server))]:
    print(f"{label:>13}: " + " ".join(f"{v:8.0f}" for v in curve(t)))
