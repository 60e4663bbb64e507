"""Online neural-network adaptation of PID gains.

A 4-h-3 perceptron (sigmoid hidden layer, ReLU outputs) maps the recent
error/control history to (kp, ki, kd).  After every control update the
weights take one gradient step on ``E = e**2 / 2``, where the unknown plant
sensitivity dy/du is replaced by the sign of ``dY * dU``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pid import CONTROL_NORMALIZATION, Gains, PidState, pid_step

N_INPUTS = 4
N_OUTPUTS = 3


@dataclass(frozen=True)
class NnConfig:
    n_hidden: int = 4
    learning_rate: float = 0.01
    gain_scale: tuple[float, float, float] = (1000.0, 10.0, 200.0)
    input_scale: tuple[float, float, float, float] = (0.1, 0.1, 0.1, 1.0)
    init_seed: int = 0
    init_range: float = 0.5
    init_gain_fraction: float = 0.2
    init_gains: tuple[float, float, float] | None = None  # warm start, overrides the fraction

    def __post_init__(self):
        if self.n_hidden < 1:
            raise ValueError("n_hidden must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if len(self.gain_scale) != N_OUTPUTS or min(self.gain_scale) <= 0:
            raise ValueError("gain_scale needs three positive entries")
        if len(self.input_scale) != N_INPUTS:
            raise ValueError("input_scale needs four entries")
        object.__setattr__(self, "gain_scale", tuple(float(v) for v in self.gain_scale))
        object.__setattr__(self, "input_scale", tuple(float(v) for v in self.input_scale))
        if self.init_gains is not None:
            g = tuple(float(v) for v in self.init_gains)
            if len(g) != N_OUTPUTS or min(g) < 0:
                raise ValueError("init_gains needs three non-negative entries")
            object.__setattr__(self, "init_gains", g)

    def initial_outputs(self) -> np.ndarray:
        """Raw network outputs the initial weights produce at zero input."""
        if self.init_gains is None:
            return np.full(N_OUTPUTS, self.init_gain_fraction)
        return np.asarray(self.init_gains) / np.asarray(self.gain_scale)


@dataclass(frozen=True)
class NnWeights:
    w_input: np.ndarray  # (N_INPUTS + 1, n_hidden), last row is the bias
    w_hidden: np.ndarray  # (n_hidden + 1, N_OUTPUTS), last row is the bias

    def copy(self) -> "NnWeights":
        return NnWeights(self.w_input.copy(), self.w_hidden.copy())


@dataclass(frozen=True)
class ForwardCache:
    x: np.ndarray  # inputs with the trailing bias 1
    s: np.ndarray
    h: np.ndarray  # hidden outputs with the trailing bias 1
    z: np.ndarray
    o: np.ndarray


def sigmoid(s):
    return 1.0 / (1.0 + np.exp(-s))


def relu(z):
    return np.maximum(z, 0.0)


def init_weights(cfg: NnConfig) -> NnWeights:
    """Uniform random weights, with output biases chosen so that at zero input
    the gains start at ``init_gains`` (default: ``init_gain_fraction`` of
    each scale)."""
    rng = np.random.default_rng(cfg.init_seed)
    r = cfg.init_range
    w_input = rng.uniform(-r, r, size=(N_INPUTS + 1, cfg.n_hidden))
    w_hidden = rng.uniform(-r, r, size=(cfg.n_hidden + 1, N_OUTPUTS))
    h0 = sigmoid(w_input[-1])
    w_hidden[-1] = cfg.initial_outputs() - h0 @ w_hidden[:-1]
    return NnWeights(w_input, w_hidden)


def forward(w: NnWeights, x) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    x_aug = np.append(np.asarray(x, dtype=float), 1.0)
    s = x_aug @ w.w_input
    h = sigmoid(s)
    h_aug = np.append(h, 1.0)
    z = h_aug @ w.w_hidden
    o = relu(z)
    return h, o, ForwardCache(x_aug, s, h_aug, z, o)


def output_gains(o: np.ndarray, cfg: NnConfig) -> Gains:
    return Gains.from_array(o * np.asarray(cfg.gain_scale))


def sign_term(y: float, y_prev: float, u: float, u_prev: float) -> float:
    """Sign of the plant sensitivity, estimated from the last output and
    control increments.  A zero product counts as +1."""
    return -1.0 if (y - y_prev) * (u - u_prev) < 0 else 1.0


def control_partials(e, e_prev, e_prev2, ts, scale=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Sensitivity of the control increment to each of (kp, ki, kd)."""
    if not ts > 0:
        raise ValueError("ts must be positive")
    return np.array(
        [
            e - e_prev,
            ts / 2 * (e + e_prev),
            (e - 2 * e_prev + e_prev2) / ts,
        ]
    ) * np.asarray(scale, dtype=float)


def gradients(
    w: NnWeights, cache: ForwardCache, e: float, partials, sign: float
) -> tuple[np.ndarray, np.ndarray]:
    """dE/dw for both layers; returns (grad_input, grad_hidden)."""
    if cache.x.shape[0] != w.w_input.shape[0] or cache.h.shape[0] != w.w_hidden.shape[0]:
        raise ValueError("forward cache does not match the weight shapes")
    # dE/dZ: e = r - y contributes the leading minus; ReLU'(0) is taken as 0
    delta_out = -e * sign * np.asarray(partials) * (cache.z > 0)
    grad_hidden = np.outer(cache.h, delta_out)
    h = cache.h[:-1]
    delta_hid = (w.w_hidden[:-1] @ delta_out) * h * (1.0 - h)
    grad_input = np.outer(cache.x, delta_hid)
    return grad_input, grad_hidden


def backward(
    w: NnWeights, cache: ForwardCache, e: float, partials, sign: float, lr: float
) -> NnWeights:
    grad_input, grad_hidden = gradients(w, cache, e, partials, sign)
    return NnWeights(w.w_input - lr * grad_input, w.w_hidden - lr * grad_hidden)


@dataclass(frozen=True)
class NnLoopState:
    pid: PidState = field(default_factory=PidState)
    e_prev: float = 0.0
    e_prev2: float = 0.0
    y_prev: float | None = None
    u_prev: float = 0.0
    cache: ForwardCache | None = None
    sign: float = 1.0


def nn_pid_step(
    state: NnLoopState, w: NnWeights, v_ref: float, y: float, ts: float, cfg: NnConfig
) -> tuple[float, Gains, NnWeights, NnLoopState]:
    """Adapt the gains from the current error, apply the PID, then learn."""
    e = v_ref - y
    x = np.asarray(cfg.input_scale) * (e, state.e_prev, state.e_prev2, state.u_prev)
    _, o, cache = forward(w, x)
    gains = output_gains(o, cfg)
    u_free, _ = pid_step(state.pid, gains, e, ts, limit=None)
    u, pid_state = pid_step(state.pid, gains, e, ts)

    y_prev = y if state.y_prev is None else state.y_prev
    sign = sign_term(y, y_prev, u, state.u_prev)
    scale = np.asarray(cfg.gain_scale) * CONTROL_NORMALIZATION
    partials = control_partials(e, state.e_prev, state.e_prev2, ts, scale)
    if u != u_free:
        # the output clamp is active: u does not respond to the gains
        partials = np.zeros_like(partials)
    w_next = backward(w, cache, e, partials, sign, cfg.learning_rate)

    next_state = NnLoopState(
        pid=pid_state,
        e_prev=e,
        e_prev2=state.e_prev,
        y_prev=y,
        u_prev=u,
        cache=cache,
        sign=sign,
    )
    return u, gains, w_next, next_state
