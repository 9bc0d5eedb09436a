"""Discrete fractional time derivative of order 1 < alpha < 2.

The derivative of u at step n is approximated by

    sigma * [ a_0 d_t u^{n-1/2}
              - sum_{k=1}^{n-1} (a_{n-k-1} - a_{n-k}) d_t u^{k-1/2}
              - a_{n-1} psi ]

with d_t u^{k-1/2} = (u^k - u^{k-1})/tau, sigma = tau^(1-alpha)/Gamma(3-alpha),
a_k = (k+1)^(2-alpha) - k^(2-alpha), and psi the initial velocity.  The
temporal accuracy of the scheme is O(tau^(3-alpha)).
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "weights",
    "CaputoScheme",
    "FractionalHistory",
    "history_term",
    "MixedCaputo",
    "solve_scalar_ode",
    "normalize_orders",
]


def normalize_orders(orders, n_continua):
    """One order per continuum, collapsed to a single order when equal.

    Solvers treat a one-element result as the single-order path, so a
    mixed configuration with identical orders reproduces it exactly.
    """
    orders = [float(orders)] if np.isscalar(orders) else [float(a) for a in orders]
    for a in orders:
        if not 1.0 < a < 2.0:
            raise ValueError(f"order must lie strictly in (1, 2), got {a}")
    if len(orders) == 1:
        return orders
    if len(orders) != n_continua:
        raise ValueError(f"got {len(orders)} orders for {n_continua} continua")
    if len(set(orders)) == 1:
        return [orders[0]]
    return orders


def weights(alpha: float, count: int) -> np.ndarray:
    """Weights a_k = (k+1)^(2-alpha) - k^(2-alpha) for k = 0..count-1.

    They satisfy a_0 = 1 and decay strictly monotonically to zero.
    """
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"order must lie strictly in (1, 2), got alpha={alpha}")
    if count < 1:
        raise ValueError(f"weight count must be positive, got {count}")
    k = np.arange(count, dtype=float)
    return (k + 1.0) ** (2.0 - alpha) - k ** (2.0 - alpha)


@dataclass(frozen=True)
class CaputoScheme:
    """Fixed-step discretization data for one derivative order.

    psi is the initial velocity (scalar or nodal array); it defaults to
    zero when a problem does not specify one.
    """

    alpha: float
    tau: float
    a: np.ndarray
    sigma: float
    psi: object = 0.0

    @classmethod
    def create(cls, alpha, tau, n_steps, psi=0.0):
        if tau <= 0:
            raise ValueError(f"time step must be positive, got tau={tau}")
        a = weights(alpha, n_steps)
        sigma = tau ** (1.0 - alpha) / math.gamma(3.0 - alpha)
        return cls(alpha=alpha, tau=tau, a=a, sigma=sigma, psi=psi)

    @property
    def n_steps(self):
        return len(self.a)


class FractionalHistory:
    """Ordered difference quotients d_t u^{k-1/2}, k = 1..n-1."""

    def __init__(self):
        self.deltas = []

    def push(self, delta):
        self.deltas.append(delta)

    def __len__(self):
        return len(self.deltas)


def history_term(scheme: CaputoScheme, history: FractionalHistory, n: int):
    """Accumulated contribution of past steps and the initial velocity.

    Returns sum_{k=1}^{n-1} (a_{n-k-1} - a_{n-k}) d_t u^{k-1/2} + a_{n-1} psi,
    the quantity subtracted inside the bracket of the discrete derivative.
    """
    if len(history) != n - 1:
        raise ValueError(
            f"history holds {len(history)} quotients, step {n} needs {n - 1}"
        )
    a = scheme.a
    out = a[n - 1] * np.asarray(scheme.psi, dtype=float)
    for k, delta in enumerate(history.deltas, start=1):
        out = out + (a[n - k - 1] - a[n - k]) * delta
    return out


class MixedCaputo:
    """Weighted combination sum_p c_p * d^(alpha_p)/dt^(alpha_p).

    Exposes, for step n, the implicit coefficient multiplying u^n and the
    explicit right-hand contribution from u^{n-1} and the shared history
    of difference quotients.  All schemes must share the time step.
    """

    def __init__(self, terms):
        self.terms = [(c, s) for c, s in terms]
        taus = {s.tau for _, s in self.terms}
        if len(taus) != 1:
            raise ValueError(f"schemes must share the time step, got taus {taus}")
        self.tau = taus.pop()

    def implicit_coefficient(self):
        """Coefficient of u^n: sum_p c_p sigma_p a_0 / tau."""
        return sum(c * s.sigma * s.a[0] / s.tau for c, s in self.terms)

    def explicit_terms(self, history, n, u_prev):
        """Right-hand contribution: the u^{n-1} part plus history terms."""
        out = 0.0
        for c, s in self.terms:
            out = out + c * s.sigma * (
                s.a[0] * u_prev / s.tau + history_term(s, history, n)
            )
        return out


def solve_scalar_ode(terms, damping, forcing, u0, v0, tau, n_steps):
    """March sum_p c_p d^(alpha_p) u + damping * u = forcing(t).

    terms is a list of (c_p, alpha_p); damping, u0, v0 may be scalars or
    arrays of a common shape (independent problems marched together);
    forcing maps the midpoint time to the same shape.  Returns the
    trajectory array of shape (n_steps + 1,) + shape.
    """
    u0 = np.asarray(u0, dtype=float)
    b = np.broadcast_to(np.asarray(damping, dtype=float), u0.shape)
    schemes = [
        (c, CaputoScheme.create(alpha, tau, n_steps, psi=v0)) for c, alpha in terms
    ]
    mixed = MixedCaputo(schemes)
    imp = mixed.implicit_coefficient() + 0.5 * b

    out = np.empty((n_steps + 1,) + u0.shape)
    out[0] = u0
    u = u0
    history = FractionalHistory()
    for n in range(1, n_steps + 1):
        t_mid = (n - 0.5) * tau
        rhs = mixed.explicit_terms(history, n, u) - 0.5 * b * u + forcing(t_mid)
        u_new = rhs / imp
        history.push((u_new - u) / tau)
        out[n] = u_new
        u = u_new
    return out
