"""Positional encoders over calendar or thermal (cumulative GDD) positions.

Four strategies are provided: the fixed sinusoidal ladder, a trainable
Fourier-feature encoder, a trainable recurrent (GRU) encoder, and the
ShiftAug augmentation that jitters calendar positions at train time. The
concatenation strategy lives in the model module because it modifies the
pixel-set encoder input rather than producing an additive encoding.

All encoders are inductive: any real position maps to a finite vector, so
positions never seen during training are handled without lookup tables.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .thermal import ThermalTimeline, gdd_at_days

__all__ = [
    "POSITION_KINDS",
    "PositionSequence",
    "SinusoidalConfig",
    "FourierPEParams",
    "RecurrentPEParams",
    "sinusoidal_encode",
    "fourier_encode",
    "fourier_encode_batch",
    "recurrent_encode",
    "recurrent_encode_batch",
    "shift_aug",
    "make_positions",
    "sinusoidal_frequencies",
    "default_tau",
]

POSITION_KINDS = ("calendar", "thermal")

CALENDAR_TAU = 1000.0
# Cumulative GDD spans roughly 0..4000 degree-days, an order of magnitude
# beyond day-of-year, so the thermal ladder gets a longer maximum wavelength.
THERMAL_TAU = 10000.0


def default_tau(kind: str) -> float:
    return CALENDAR_TAU if kind == "calendar" else THERMAL_TAU


@dataclass
class PositionSequence:
    """Non-decreasing scalar positions of one observation sequence."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.kind not in POSITION_KINDS:
            raise ValueError(f"position kind {self.kind!r} not in {POSITION_KINDS}")
        if self.values.ndim != 1:
            raise ValueError("position sequence must be 1-D")
        if np.any(np.diff(self.values) < 0):
            raise ValueError("position sequence must be non-decreasing")
        if self.kind == "thermal" and self.values.size and self.values.min() < 0:
            raise ValueError("thermal positions must be >= 0")


@dataclass(frozen=True)
class SinusoidalConfig:
    dimension: int
    tau: float = CALENDAR_TAU

    def __post_init__(self):
        if self.dimension <= 0 or self.dimension % 2:
            raise ValueError(f"sinusoidal dimension must be even and positive, got {self.dimension}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


def sinusoidal_frequencies(dim: int, tau: float) -> np.ndarray:
    """Frequency ladder omega_i = (1/tau)^(2i/D) for i = 1..D/2."""
    i = np.arange(1, dim // 2 + 1, dtype=np.float64)
    return tau ** (-2.0 * i / dim)


def sinusoidal_encode(positions, cfg: SinusoidalConfig) -> np.ndarray:
    """Fixed encoding [sin(w_i t), cos(w_i t)] interleaved, shape (T, D).

    Accepts a PositionSequence or a bare array of positions of any shape;
    the encoding axis is appended last.
    """
    values = positions.values if isinstance(positions, PositionSequence) else np.asarray(positions, dtype=np.float64)
    omega = sinusoidal_frequencies(cfg.dimension, cfg.tau)
    ang = values[..., None] * omega
    out = np.empty(values.shape + (cfg.dimension,))
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out


class FourierPEParams:
    """Trainable Fourier features: r(t) = (1/sqrt(D))[cos(w t) || sin(w t)],
    then a GeLU layer and a linear projection back to D."""

    def __init__(self, freq: Tensor, mlp_w: Tensor, mlp_b: Tensor, proj: Tensor):
        dim = proj.data.shape[1]
        hidden = proj.data.shape[0]
        if freq.data.shape != (dim // 2,) or mlp_w.data.shape != (dim, hidden) \
                or mlp_b.data.shape != (hidden,):
            raise ValueError(
                "fourier params: inconsistent shapes "
                f"{freq.data.shape}, {mlp_w.data.shape}, {mlp_b.data.shape}, {proj.data.shape}"
            )
        self.freq = freq
        self.mlp_w = mlp_w
        self.mlp_b = mlp_b
        self.proj = proj
        self.dim = dim

    @classmethod
    def create(cls, dim: int, tau: float, rng: np.random.Generator, hidden: int | None = None):
        """Frequencies start at the fixed sinusoidal ladder so training begins
        from the non-learned encoder as a special case."""
        if dim % 2:
            raise ValueError(f"fourier encoder dimension must be even, got {dim}")
        hidden = dim if hidden is None else hidden
        freq = Tensor(sinusoidal_frequencies(dim, tau), requires_grad=True)
        bound_in = 1.0 / np.sqrt(dim)
        bound_h = 1.0 / np.sqrt(hidden)
        mlp_w = Tensor(rng.uniform(-bound_in, bound_in, (dim, hidden)), requires_grad=True)
        mlp_b = Tensor(np.zeros(hidden), requires_grad=True)
        proj = Tensor(rng.uniform(-bound_h, bound_h, (hidden, dim)), requires_grad=True)
        return cls(freq, mlp_w, mlp_b, proj)

    def named(self, prefix: str) -> dict:
        return {
            f"{prefix}.freq": self.freq,
            f"{prefix}.mlp_w": self.mlp_w,
            f"{prefix}.mlp_b": self.mlp_b,
            f"{prefix}.proj": self.proj,
        }


def fourier_encode_batch(values: np.ndarray, params: FourierPEParams) -> Tensor:
    """Encode a flat array of N positions to a Tensor (N, D) on the tape."""
    values = np.asarray(values, dtype=np.float64).reshape(-1, 1)
    ang = ad.mul(Tensor(values), params.freq)               # (N, D/2)
    r = ad.mul(ad.concat([ad.cos(ang), ad.sin(ang)], axis=1),
               1.0 / np.sqrt(params.dim))
    h = ad.gelu(ad.linear(r, params.mlp_w, params.mlp_b))
    return ad.matmul(h, params.proj)


def fourier_encode(positions: PositionSequence, params: FourierPEParams) -> Tensor:
    return fourier_encode_batch(positions.values, params)


class RecurrentPEParams:
    """GRU over vectorized positions, projected to the embedding width.

    Input/hidden gate weights are packed [reset | update | candidate].
    """

    def __init__(self, w_i: Tensor, w_h: Tensor, b_i: Tensor, b_h: Tensor,
                 proj_w: Tensor, proj_b: Tensor):
        h = w_h.data.shape[0]
        h_in = w_i.data.shape[0]
        dim = proj_w.data.shape[1]
        if w_i.data.shape != (h_in, 3 * h) or w_h.data.shape != (h, 3 * h) \
                or b_i.data.shape != (3 * h,) or b_h.data.shape != (3 * h,) \
                or proj_w.data.shape != (h, dim) or proj_b.data.shape != (dim,):
            raise ValueError("recurrent params: inconsistent shapes")
        self.w_i = w_i
        self.w_h = w_h
        self.b_i = b_i
        self.b_h = b_h
        self.proj_w = proj_w
        self.proj_b = proj_b
        self.hidden = h
        self.input_dim = h_in
        self.dim = dim

    @classmethod
    def create(cls, dim: int, rng: np.random.Generator,
               hidden: int | None = None, input_dim: int | None = None):
        hidden = dim if hidden is None else hidden
        input_dim = dim if input_dim is None else input_dim
        bi = 1.0 / np.sqrt(input_dim)
        bh = 1.0 / np.sqrt(hidden)
        w_i = Tensor(rng.uniform(-bi, bi, (input_dim, 3 * hidden)), requires_grad=True)
        w_h = Tensor(rng.uniform(-bh, bh, (hidden, 3 * hidden)), requires_grad=True)
        b_i = Tensor(np.zeros(3 * hidden), requires_grad=True)
        b_h = Tensor(np.zeros(3 * hidden), requires_grad=True)
        proj_w = Tensor(rng.uniform(-bh, bh, (hidden, dim)), requires_grad=True)
        proj_b = Tensor(np.zeros(dim), requires_grad=True)
        return cls(w_i, w_h, b_i, b_h, proj_w, proj_b)

    def named(self, prefix: str) -> dict:
        return {
            f"{prefix}.w_i": self.w_i,
            f"{prefix}.w_h": self.w_h,
            f"{prefix}.b_i": self.b_i,
            f"{prefix}.b_h": self.b_h,
            f"{prefix}.proj_w": self.proj_w,
            f"{prefix}.proj_b": self.proj_b,
        }


def recurrent_encode_batch(values: np.ndarray, params: RecurrentPEParams,
                           cfg: SinusoidalConfig) -> Tensor:
    """Encode positions (B, T) to a Tensor (B, T, D), causally over T."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"recurrent encoder expects (B, T) positions, got {values.shape}")
    if cfg.dimension != params.input_dim:
        raise ValueError(
            f"recurrent encoder input width {params.input_dim} != sinusoidal dim {cfg.dimension}"
        )
    b, t = values.shape
    nh = params.hidden
    z = sinusoidal_encode(values, cfg)  # (B, T, H_in), constant
    h = Tensor(np.zeros((b, nh)))
    outs = []
    for step in range(t):
        gi = ad.linear(Tensor(z[:, step, :]), params.w_i, params.b_i)
        gh = ad.linear(h, params.w_h, params.b_h)
        r = ad.sigmoid(ad.add(ad.slice_axis(gi, 1, 0, nh), ad.slice_axis(gh, 1, 0, nh)))
        u = ad.sigmoid(ad.add(ad.slice_axis(gi, 1, nh, 2 * nh), ad.slice_axis(gh, 1, nh, 2 * nh)))
        n = ad.tanh(ad.add(ad.slice_axis(gi, 1, 2 * nh, 3 * nh),
                           ad.mul(r, ad.slice_axis(gh, 1, 2 * nh, 3 * nh))))
        h = ad.add(ad.mul(ad.sub(1.0, u), n), ad.mul(u, h))
        outs.append(ad.reshape(h, (b, 1, nh)))
    stacked = ad.reshape(ad.concat(outs, axis=1), (b * t, nh))
    p = ad.linear(stacked, params.proj_w, params.proj_b)
    return ad.reshape(p, (b, t, params.dim))


def recurrent_encode(positions: PositionSequence, params: RecurrentPEParams,
                     cfg: SinusoidalConfig) -> Tensor:
    out = recurrent_encode_batch(positions.values[None, :], params, cfg)
    return ad.reshape(out, (positions.values.size, params.dim))


def shift_aug(positions: PositionSequence, rng: np.random.Generator,
              max_shift_days: int) -> PositionSequence:
    """Add one uniform integer day shift in [-max_shift, +max_shift] to a
    calendar sequence (train-time augmentation only)."""
    if positions.kind != "calendar":
        raise ValueError("shift_aug applies to calendar positions only")
    if max_shift_days < 0:
        raise ValueError(f"max_shift_days must be >= 0, got {max_shift_days}")
    delta = int(rng.integers(-max_shift_days, max_shift_days + 1))
    return PositionSequence(positions.values + delta, "calendar")


def make_positions(days, timeline: ThermalTimeline | None, kind: str) -> PositionSequence:
    """Day-of-year positions, or their cumulative-GDD values under `kind`."""
    days = np.asarray(days)
    if kind == "calendar":
        return PositionSequence(days.astype(np.float64), "calendar")
    if kind == "thermal":
        if timeline is None:
            raise ValueError("thermal positions need a thermal timeline")
        return PositionSequence(gdd_at_days(timeline, days), "thermal")
    raise ValueError(f"position kind {kind!r} not in {POSITION_KINDS}")
