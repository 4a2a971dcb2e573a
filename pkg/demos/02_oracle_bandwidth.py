"""Oracle bandwidths for the library links.

The oracle needs the link itself: it balances the sup-type approximation
error sqrt(h) Delta*(h) against the noise level ||K||_inf eps sqrt(ln 1/eps).

Run:  python demos/02_oracle_bandwidth.py
"""
import math
import warnings

from structadapt import LinkFunction, function_library, make_kernel
from structadapt.oracle import oracle_profile

warnings.simplefilter("ignore")
kernel = make_kernel(1)

# f(u) = u^2 has Delta*(h) = h^2 / 24, so h* solves h^(5/2) / 24 = 2 eps sqrt(ln 1/eps).
square = LinkFunction("square", lambda u: u * u, 4.0)
for eps in (1e-2, 1e-3):
    analytic = min(1.0, (48 * eps * math.sqrt(math.log(1 / eps))) ** 0.4)
    prof = oracle_profile(kernel, square, 0.0, eps)
    print(f"u^2, eps={eps:g}: h* = {prof.h_star:.5f} (closed form {analytic:.5f})")

links = [("constant", (0.7,)), ("cosine", (4.0, 1.0)), ("cusp", (0.5, 1.0)), ("cusp", (1.0, 1.0)),
         ("bump", (0.0, 0.3, 1.0)), ("ramp", (0.1,))]
print("\nlink                    y     eps=2^-5   eps=2^-9")
for name, params in links:
    f = function_library(name, params)
    for y in (0.0, 0.4):
        hs = [oracle_profile(kernel, f, y, 2.0**-k).h_star for k in (5, 9)]
        print(f"{name + str(params):22s} {y:4.1f}   {hs[0]:8.4f}   {hs[1]:8.4f}")
# Rough links (the cusp at its tip) get small oracle bandwidths.  Only the
# constant keeps the full window at every noise level; the ramp keeps it at
# its linear centre until the noise level drops below the bias from the corners.
