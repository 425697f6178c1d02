"""Backend selection for the transportation kernel.

Prefers the compiled extension; falls back to the pure-Python solver when
the extension is unavailable or DRNM_PURE_PYTHON is set.  Both expose

    solve_transport(cost, supply, demand, eps=1e-12) -> (flow, alpha, beta)

for a balanced problem (sum supply == sum demand), where alpha/beta are
dual prices with beta[j] - alpha[i] <= cost[i][j].
"""

import os

if os.environ.get("DRNM_PURE_PYTHON"):
    from ._transport_py import solve_transport

    BACKEND = "python"
else:
    try:
        from ._transport import solve_transport

        BACKEND = "cython"
    except ImportError:
        from ._transport_py import solve_transport

        BACKEND = "python"

__all__ = ["solve_transport", "BACKEND"]
