"""Independent reference computations shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from evcruise.nn import NnWeights, forward
from evcruise.pid import Gains


def positional_pid(g: Gains, errors, ts: float) -> np.ndarray:
    """Textbook positional PID with trapezoidal integral, zero history."""
    out, integral, prev = [], 0.0, 0.0
    for e in errors:
        integral += ts * (e + prev) / 2
        out.append(g.kp * e + g.ki * integral + g.kd * (e - prev) / ts)
        prev = e
    return np.array(out)


def frozen_sign_loss(w: NnWeights, w0: NnWeights, x, e: float, partials, sign: float) -> float:
    """Squared-error surrogate linearized around ``w0``.

    The plant response to a change in the network outputs is
    ``sign * partials . (o(w) - o(w0))``; sign and partials are held fixed.
    """
    _, o, _ = forward(w, x)
    _, o0, _ = forward(w0, x)
    e_new = e - sign * float(np.dot(partials, o - o0))
    return 0.5 * e_new**2


def central_difference(w0: NnWeights, loss, h: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    grads = []
    for name in ("w_input", "w_hidden"):
        base = getattr(w0, name)
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            plus, minus = w0.copy(), w0.copy()
            getattr(plus, name)[idx] += h
            getattr(minus, name)[idx] -= h
            g[idx] = (loss(plus) - loss(minus)) / (2 * h)
        grads.append(g)
    return grads[0], grads[1]


def quadratic_surrogate(target):
    """Fitness ``1 / (1 + |g - target|^2)``, maximal at ``target``."""
    target = np.asarray(target, dtype=float)

    def fitness(g: Gains) -> float:
        return 1.0 / (1.0 + float(np.sum((g.as_array() - target) ** 2)))

    return fitness
