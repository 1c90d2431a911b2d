"""Pixel-set encoder + temporal attention classifier over SITS parcels.

Each time step's pixel set is embedded independently (per-pixel MLP, then
permutation-invariant mean/std pooling, then an output MLP with batch
normalization). A single learnable master query attends over the time axis
with channel grouping, collapsing the sequence to one feature vector that a
small MLP maps to class logits.

Temporal position enters in one of three ways depending on the variant: an
additive encoding on the per-step embeddings, a scalar concatenated into the
pixel-set encoder (the `tpe_concat` variant), or not at all (`none`).
"""

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import encodings as enc
from .autodiff import BatchNormState, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .rngs import substream

__all__ = [
    "VARIANTS",
    "THERMAL_VARIANTS",
    "ModelConfig",
    "PixelSetBatch",
    "PseParams",
    "LtaeParams",
    "HeadParams",
    "Model",
    "build_model",
    "pse_forward",
    "ltae_forward",
    "classify",
    "save_model",
    "load_model",
    "position_kind",
]

VARIANTS = (
    "none",
    "calendar",
    "calendar_shiftaug",
    "tpe_sin",
    "tpe_concat",
    "tpe_fourier",
    "tpe_recurrent",
)
THERMAL_VARIANTS = ("tpe_sin", "tpe_concat", "tpe_fourier", "tpe_recurrent")

# variant -> additive encoder family (None: no additive positional term)
_ADDITIVE = {
    "none": None,
    "calendar": "sin",
    "calendar_shiftaug": "sin",
    "tpe_sin": "sin",
    "tpe_concat": None,
    "tpe_fourier": "fourier",
    "tpe_recurrent": "recurrent",
}


def position_kind(variant: str) -> str | None:
    """Which position scale a variant consumes (None for `none`)."""
    if variant == "none":
        return None
    if variant in ("calendar", "calendar_shiftaug"):
        return "calendar"
    return "thermal"


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    channels: int
    classes: int
    dim: int = 128
    heads: int = 16
    key_dim: int = 8
    mlp1_hidden: tuple = (32, 64)
    head_hidden: tuple = (64, 32)
    tau: float | None = None
    fourier_hidden: int | None = None
    concat_divisor: float = 1.0
    max_shift_days: int = 60

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown model variant {self.variant!r}; expected one of {VARIANTS}")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.channels < 1 or self.classes < 2:
            raise ValueError("need >= 1 channel and >= 2 classes")
        object.__setattr__(self, "mlp1_hidden", tuple(self.mlp1_hidden))
        object.__setattr__(self, "head_hidden", tuple(self.head_hidden))

    @property
    def effective_tau(self) -> float:
        if self.tau is not None:
            return self.tau
        kind = position_kind(self.variant)
        return enc.default_tau(kind) if kind else enc.CALENDAR_TAU

    def to_meta(self) -> dict:
        meta = asdict(self)
        meta["mlp1_hidden"] = list(self.mlp1_hidden)
        meta["head_hidden"] = list(self.head_hidden)
        return meta

    @classmethod
    def from_meta(cls, meta: dict) -> "ModelConfig":
        return cls(**meta)


@dataclass
class PixelSetBatch:
    """values (B,T,S,C) in [0,1]; positions (B,T) scalars or None; mask (B,T)."""

    values: np.ndarray
    positions: np.ndarray | None
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 4:
            raise ValueError(f"batch values must be (B,T,S,C), got {self.values.shape}")
        if self.mask.shape != self.values.shape[:2]:
            raise ValueError(f"mask {self.mask.shape} != (B,T) {self.values.shape[:2]}")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValueError("batch values must lie in [0, 1]")
        if not self.mask.any(axis=1).all():
            raise ValueError("every sample needs at least one valid time step")
        if self.positions is not None:
            self.positions = np.asarray(self.positions, dtype=np.float64)
            if self.positions.shape != self.values.shape[:2]:
                raise ValueError(
                    f"positions {self.positions.shape} != (B,T) {self.values.shape[:2]}"
                )


class PseParams:
    def __init__(self, mlp1: list, mlp2_w: Tensor, mlp2_b: Tensor, bn: BatchNormState):
        self.mlp1 = mlp1  # [(w, b), ...]
        self.mlp2_w = mlp2_w
        self.mlp2_b = mlp2_b
        self.bn = bn

    def named(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(self.mlp1):
            out[f"pse.mlp1.{i}.w"] = w
            out[f"pse.mlp1.{i}.b"] = b
        out["pse.mlp2.w"] = self.mlp2_w
        out["pse.mlp2.b"] = self.mlp2_b
        out["pse.bn.gamma"] = self.bn.gamma
        out["pse.bn.beta"] = self.bn.beta
        return out


class LtaeParams:
    def __init__(self, query: Tensor, key_w: Tensor, out_w: Tensor, out_b: Tensor,
                 heads: int, key_dim: int):
        self.query = query    # (H, d_k)
        self.key_w = key_w    # (H, D/H, d_k)
        self.out_w = out_w
        self.out_b = out_b
        self.heads = heads
        self.key_dim = key_dim

    def named(self) -> dict:
        return {
            "ltae.query": self.query,
            "ltae.key_w": self.key_w,
            "ltae.out_w": self.out_w,
            "ltae.out_b": self.out_b,
        }


class HeadParams:
    def __init__(self, layers: list):
        self.layers = layers  # [(w, b), ...], last layer emits logits

    def named(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(self.layers):
            out[f"head.{i}.w"] = w
            out[f"head.{i}.b"] = b
        return out


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def build_model(config: ModelConfig, seed: int) -> "Model":
    """Initialize all parameters for the configured variant.

    Linear weights draw from the fan-in uniform, biases start at zero, batch
    norm at identity, and the master query from N(0, 1/d_k). Every parameter
    has its own named substream, so two builds with one seed are bitwise
    identical regardless of construction order.
    """

    def uni(name, fan_in, shape):
        return Tensor(_uniform_fan_in(substream(seed, "init", name), fan_in, shape),
                      requires_grad=True)

    def zeros(shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    c = config.channels
    mlp1 = []
    fan = c
    for i, width in enumerate(config.mlp1_hidden):
        mlp1.append((uni(f"pse.mlp1.{i}.w", fan, (fan, width)), zeros(width)))
        fan = width
    pooled = 2 * config.mlp1_hidden[-1]
    mlp2_in = pooled + (1 if config.variant == "tpe_concat" else 0)
    pse = PseParams(
        mlp1,
        uni("pse.mlp2.w", mlp2_in, (mlp2_in, config.dim)),
        zeros(config.dim),
        BatchNormState(config.dim),
    )

    group = config.dim // config.heads
    query = Tensor(
        substream(seed, "init", "ltae.query").normal(0.0, 1.0 / math.sqrt(config.key_dim),
                                                     (config.heads, config.key_dim)),
        requires_grad=True,
    )
    ltae = LtaeParams(
        query,
        uni("ltae.key_w", group, (config.heads, group, config.key_dim)),
        uni("ltae.out_w", config.dim, (config.dim, config.dim)),
        zeros(config.dim),
        config.heads,
        config.key_dim,
    )

    layers = []
    fan = config.dim
    for i, width in enumerate(tuple(config.head_hidden) + (config.classes,)):
        layers.append((uni(f"head.{i}.w", fan, (fan, width)), zeros(width)))
        fan = width
    head = HeadParams(layers)

    pe_params = None
    if _ADDITIVE[config.variant] == "fourier":
        pe_params = enc.FourierPEParams.create(
            config.dim, config.effective_tau, substream(seed, "init", "pe.fourier"),
            hidden=config.fourier_hidden,
        )
    elif _ADDITIVE[config.variant] == "recurrent":
        pe_params = enc.RecurrentPEParams.create(
            config.dim, substream(seed, "init", "pe.gru"),
        )
    return Model(config, pse, ltae, head, pe_params)


def pse_forward(batch: PixelSetBatch, params: PseParams, training: bool,
                concat_positions: np.ndarray | None = None) -> Tensor:
    """Embed each time step's pixel set; returns a Tensor (B, T, D).

    Pooling over the pixel axis uses order-independent reductions, so pixel
    order never affects the output. When the concat hook is active the
    position scalar joins the pooled features ahead of the output MLP.
    """
    b, t, s, c = batch.values.shape
    x = Tensor(batch.values.reshape(b * t * s, c))
    h = x
    for w, bias in params.mlp1:
        h = ad.relu(ad.linear(h, w, bias))
    feat = h.data.shape[1]
    h3 = ad.reshape(h, (b * t, s, feat))
    mean_k = ad.mean_axis(h3, 1, keepdims=True)
    mean = ad.reshape(mean_k, (b * t, feat))
    dev = ad.sub(h3, mean_k)
    var = ad.mean_axis(ad.mul(dev, dev), 1)
    # exact zero std when a pixel set is constant; also kills the sqrt
    # gradient there instead of letting rounding noise through
    spread = (h3.data.max(axis=1) != h3.data.min(axis=1)).astype(np.float64)
    std = ad.mul(ad.sqrt(var), Tensor(spread))
    pooled = ad.concat([mean, std], axis=1)
    expected = params.mlp2_w.data.shape[0]
    if expected == pooled.data.shape[1] + 1:
        if concat_positions is None:
            raise ValueError("pse_forward: this model concatenates positions but none were given")
        scalars = (concat_positions.reshape(b * t, 1)).astype(np.float64)
        pooled = ad.concat([pooled, Tensor(scalars)], axis=1)
    elif concat_positions is not None:
        raise ValueError("pse_forward: concat_positions given but the output MLP has no slot")
    z = ad.linear(pooled, params.mlp2_w, params.mlp2_b)
    stat_rows = None
    if training and not batch.mask.all():
        stat_rows = np.nonzero(batch.mask.reshape(-1))[0]
    z = ad.batch_norm(z, params.bn, training, stat_rows=stat_rows)
    z = ad.relu(z)
    return ad.reshape(z, (b, t, z.data.shape[1]))


def ltae_forward(embeddings: Tensor, pe, mask: np.ndarray, params: LtaeParams) -> Tensor:
    """Master-query attention with channel grouping; returns a Tensor (B, D).

    `pe` (Tensor or array, or None for the position-free variant) is added
    to the embeddings before the key projections. Masked steps are excluded
    from the attention softmax entirely, so they receive exactly zero weight.
    """
    b, t, d = embeddings.data.shape
    heads, d_k = params.heads, params.key_dim
    if d % heads:
        raise ValueError(f"ltae_forward: dim {d} not divisible by heads {heads}")
    group = d // heads
    x = embeddings if pe is None else ad.add(embeddings, pe if isinstance(pe, Tensor) else Tensor(pe))
    xg = ad.reshape(x, (b, t, heads, group))
    scale = 1.0 / math.sqrt(d_k)
    outs = []
    for h in range(heads):
        xh = ad.reshape(ad.slice_axis(xg, 2, h, h + 1), (b, t, group))
        kh = ad.matmul(ad.reshape(xh, (b * t, group)),
                       ad.reshape(ad.slice_axis(params.key_w, 0, h, h + 1), (group, d_k)))
        qh = ad.reshape(ad.slice_axis(params.query, 0, h, h + 1), (d_k, 1))
        scores = ad.mul(ad.reshape(ad.matmul(kh, qh), (b, t)), scale)
        attn = ad.masked_softmax(scores, mask, axis=1)
        weighted = ad.mul(ad.reshape(attn, (b, t, 1)), xh)
        outs.append(ad.sum_axis(weighted, 1))
    merged = ad.concat(outs, axis=1)
    return ad.relu(ad.linear(merged, params.out_w, params.out_b))


def classify(features: Tensor, params: HeadParams) -> Tensor:
    """MLP decoder: ReLU between layers, raw logits out."""
    h = features
    for w, b in params.layers[:-1]:
        h = ad.relu(ad.linear(h, w, b))
    w, b = params.layers[-1]
    return ad.linear(h, w, b)


class Model:
    """Parameter bundle for one variant, with the full forward pass."""

    def __init__(self, config: ModelConfig, pse: PseParams, ltae: LtaeParams,
                 head: HeadParams, pe_params=None):
        self.config = config
        self.pse = pse
        self.ltae = ltae
        self.head = head
        self.pe_params = pe_params

    def trainable(self) -> dict:
        out = {}
        out.update(self.pse.named())
        out.update(self.ltae.named())
        out.update(self.head.named())
        if self.pe_params is not None:
            prefix = "pe.fourier" if isinstance(self.pe_params, enc.FourierPEParams) else "pe.gru"
            out.update(self.pe_params.named(prefix))
        return out

    def state_arrays(self) -> dict:
        arrays = {name: t.data for name, t in self.trainable().items()}
        arrays["pse.bn.running_mean"] = self.pse.bn.running_mean
        arrays["pse.bn.running_var"] = self.pse.bn.running_var
        return arrays

    def load_state_arrays(self, arrays: dict) -> None:
        own = self.trainable()
        expected = set(own) | {"pse.bn.running_mean", "pse.bn.running_var"}
        if set(arrays) != expected:
            missing = sorted(expected - set(arrays))
            extra = sorted(set(arrays) - expected)
            raise ValueError(f"model state mismatch: missing {missing}, unexpected {extra}")
        for name, t in own.items():
            if arrays[name].shape != t.data.shape:
                raise ValueError(
                    f"model state {name!r}: shape {arrays[name].shape} != {t.data.shape}"
                )
            t.data = np.ascontiguousarray(arrays[name], dtype=np.float64)
        self.pse.bn.running_mean = np.asarray(arrays["pse.bn.running_mean"], dtype=np.float64)
        self.pse.bn.running_var = np.asarray(arrays["pse.bn.running_var"], dtype=np.float64)

    def positional_encoding(self, positions: np.ndarray):
        """Additive encoding (B, T, D) for this variant, or None."""
        family = _ADDITIVE[self.config.variant]
        if family is None:
            return None
        if positions is None:
            raise ValueError(f"variant {self.config.variant!r} needs positions")
        cfg = enc.SinusoidalConfig(self.config.dim, self.config.effective_tau)
        if family == "sin":
            return enc.sinusoidal_encode(positions, cfg)
        if family == "fourier":
            b, t = positions.shape
            flat = enc.fourier_encode_batch(positions.reshape(-1), self.pe_params)
            return ad.reshape(flat, (b, t, self.config.dim))
        return enc.recurrent_encode_batch(positions, self.pe_params, cfg)

    def forward(self, batch: PixelSetBatch, training: bool) -> Tensor:
        """Logits Tensor (B, K) for one batch."""
        concat_positions = None
        if self.config.variant == "tpe_concat":
            if batch.positions is None:
                raise ValueError("tpe_concat needs thermal positions")
            concat_positions = batch.positions / self.config.concat_divisor
        embeddings = pse_forward(batch, self.pse, training, concat_positions)
        pe = None
        if _ADDITIVE[self.config.variant] is not None:
            pe = self.positional_encoding(batch.positions)
        features = ltae_forward(embeddings, pe, batch.mask, self.ltae)
        return classify(features, self.head)


def save_model(path, model: Model) -> None:
    save_checkpoint(path, model.state_arrays(), meta=model.config.to_meta())


def load_model(path) -> Model:
    """Rebuild a model from a checkpoint; the stored config must be complete
    and consistent with the stored arrays."""
    arrays, meta = load_checkpoint(path)
    if not meta:
        raise ValueError(f"{path}: checkpoint has no model config header")
    config = ModelConfig.from_meta(meta)
    model = build_model(config, seed=0)
    model.load_state_arrays(arrays)
    return model
