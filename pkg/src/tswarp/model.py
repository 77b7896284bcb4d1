"""Full multi-scale classifier.

The model encodes an irregular grid, then runs a stack of scale blocks.
Block 0 keeps the raw grid (identity re-gridding, so it owns no warp
parameters); every later block learns a transform onto a coarser or
finer grid before its attention layers.  The readout pools every
block's output and classifies the fused summary.

Scale entries are interpreted as follows:

* the first entry must be ``1`` and means "the raw input grid";
* a later positive entry ``s`` targets ``max(1, floor(s * reference_length
  + 0.5))`` slots, where ``reference_length`` is fixed from training
  data (median grid length);
* a later entry of ``0`` targets the incoming batch's own grid length,
  which step-level classification needs so logits align with labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as tt
from .tensor import Parameter, Tensor
from .encoder import InputEncoder
from .warp import WarpLayer, WARP_MODES
from .attention import AttentionBlock
from .decoder import Decoder, TASKS

__all__ = ["ModelConfig", "LayerState", "ModelOutput", "MultiScaleModel"]


@dataclass
class ModelConfig:
    num_variates: int
    num_classes: int
    dim: int = 32
    heads: int = 1
    attn_layers: int = 2
    scales: tuple = (1.0, 1.0)
    task: str = "sequence"
    warp_mode: str = "adaptive"
    adjusted_soft: bool = False
    use_value: bool = True
    use_type: bool = True
    use_abs_time: bool = True
    use_rel_time: bool = True
    time_scale: float = 1.0
    dropout: float = 0.0
    head_width: int = 8
    reference_length: int = 0

    def validate(self) -> None:
        if self.num_variates < 1 or self.num_classes < 1:
            raise ValueError("num_variates and num_classes must be positive")
        if self.dim < 1 or self.heads < 1 or self.attn_layers < 1 or self.head_width < 1:
            raise ValueError("dim, heads, attn_layers and head_width must be positive")
        if len(self.scales) < 1:
            raise ValueError("scales must contain at least one entry")
        if float(self.scales[0]) != 1.0:
            raise ValueError("the first scale entry must be 1 (raw input grid)")
        if any(float(s) < 0 for s in self.scales):
            raise ValueError("scale entries must be >= 0")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.warp_mode not in WARP_MODES:
            raise ValueError(f"warp_mode must be one of {WARP_MODES}")
        if any(float(s) > 0 for s in self.scales[1:]) and self.reference_length < 1:
            raise ValueError("reference_length must be set before building the model")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["scales"] = [float(s) for s in self.scales]
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        raw = dict(raw)
        raw["scales"] = tuple(float(s) for s in raw.get("scales", (1.0,)))
        return cls(**raw)


@dataclass
class LayerState:
    """Everything one scale block produced, kept for export and checks."""
    alignment: Tensor        # (..., K, L_new, L_prev)
    warped: Tensor           # (..., K, L_new, D) before attention
    hidden: Tensor           # (..., K, L_new, D) after attention
    mask: Tensor             # (..., K, L_new) observed fraction
    times: Tensor            # (..., K, L_new) time anchors


@dataclass
class ModelOutput:
    logits: Tensor
    probabilities: np.ndarray
    fused: Tensor
    states: list = field(default_factory=list)


class MultiScaleModel:
    def __init__(self, config: ModelConfig, rng):
        config.validate()
        self.config = config
        c = config
        self.encoder = InputEncoder(
            rng, c.num_variates, c.dim,
            use_value=c.use_value, use_type=c.use_type,
            use_abs_time=c.use_abs_time, use_rel_time=c.use_rel_time,
            time_scale=c.time_scale, prefix="encoder",
        )
        self.warps = []
        self.attns = []
        for n in range(len(c.scales)):
            if n == 0:
                self.warps.append(WarpLayer(rng, c.dim, mode="identity",
                                            prefix=f"block{n}.warp"))
            else:
                self.warps.append(WarpLayer(rng, c.dim, mode=c.warp_mode,
                                            adjusted_soft=c.adjusted_soft,
                                            prefix=f"block{n}.warp"))
            self.attns.append(AttentionBlock(
                rng, c.dim, c.heads, c.attn_layers, head_width=c.head_width,
                dropout=c.dropout, prefix=f"block{n}.attn",
            ))
        self.decoder = Decoder(rng, c.dim, c.num_classes, task=c.task, prefix="decoder")

    def parameters(self) -> list[Parameter]:
        params = list(self.encoder.parameters())
        for warp, attn in zip(self.warps, self.attns):
            params.extend(warp.parameters())
            params.extend(attn.parameters())
        params.extend(self.decoder.parameters())
        return params

    def registry(self) -> dict:
        """Name -> Parameter map; names must be unique."""
        reg = {}
        for p in self.parameters():
            if p.name in reg:
                raise ValueError(f"duplicate parameter name {p.name!r}")
            reg[p.name] = p
        return reg

    def target_length(self, index: int, input_length: int) -> int:
        """Slot count for scale ``index`` given the raw grid length."""
        scale = float(self.config.scales[index])
        if index == 0 or scale == 0.0:
            return input_length
        return max(1, int(np.floor(scale * self.config.reference_length + 0.5)))

    def forward(self, values, types, mask, times, training: bool = False,
                rng=None) -> ModelOutput:
        """``values``/``types``/``mask``: (..., K, L); ``times``: (..., L)."""
        drop_rng = rng if (training and self.config.dropout > 0) else None
        hidden = self.encoder.encode(values, types, mask, times)
        m_np = np.asarray(mask, dtype=np.float64)
        cur_mask = Tensor(m_np.copy())
        t_np = np.asarray(times, dtype=np.float64)
        cur_times = Tensor(np.broadcast_to(t_np[..., None, :], m_np.shape).copy())
        raw_length = m_np.shape[-1]
        states = []
        for n in range(len(self.config.scales)):
            new_len = self.target_length(n, raw_length)
            warped, frac, anchors, align = self.warps[n].forward(
                hidden, cur_mask, cur_times, new_len)
            out = self.attns[n].encode_block(warped, frac.data > 0, rng=drop_rng)
            states.append(LayerState(alignment=align, warped=warped, hidden=out,
                                     mask=frac, times=anchors))
            hidden, cur_mask, cur_times = out, frac, anchors
        summaries = [self.decoder.summarize_scale(st.hidden, st.mask.data > 0)
                     for st in states]
        fused = self.decoder.fuse(summaries)
        if self.config.task == "per_step":
            logits = self.decoder.per_step_logits(states[-1].hidden, fused)
        else:
            logits = self.decoder.classify(fused)
        return ModelOutput(logits=logits, probabilities=self.decoder.probabilities(logits),
                           fused=fused, states=states)

    def forward_batch(self, batch, training: bool = False, rng=None) -> ModelOutput:
        return self.forward(batch.values, batch.types, batch.mask, batch.times,
                            training=training, rng=rng)

    def loss(self, output: ModelOutput, labels, label_mask=None) -> Tensor:
        """Mean negative log-likelihood from logits."""
        logits = output.logits
        task = self.config.task
        labels = np.asarray(labels)
        if task == "multi_label":
            if labels.shape != logits.shape:
                raise ValueError(
                    f"multi_label targets {labels.shape} do not match logits {logits.shape}")
            y = labels.astype(np.float64)
            # softplus(z) - z*y is -log p(y | z) for a sigmoid link
            per = tt.softplus(logits) - logits * Tensor(y)
            return tt.tmean(per)
        if task == "per_step":
            if logits.ndim != labels.ndim + 1 or logits.shape[:-1] != labels.shape:
                raise ValueError(
                    f"per-step logits {logits.shape} do not align with labels {labels.shape}; "
                    "the final scale must target the label grid")
            if label_mask is None:
                label_mask = np.ones(labels.shape)
            weights = np.asarray(label_mask, dtype=np.float64)
            safe = np.where(labels < 0, 0, labels)
            onehot = np.eye(self.config.num_classes)[safe] * weights[..., None]
            logp = _log_softmax(logits)
            total = tt.tsum(logp * Tensor(onehot)) * -1.0
            denom = max(weights.sum(), 1.0)
            return total / denom
        if labels.shape != logits.shape[:-1]:
            raise ValueError(
                f"sequence labels {labels.shape} do not match logits {logits.shape}")
        onehot = np.eye(self.config.num_classes)[labels.astype(int)]
        logp = _log_softmax(logits)
        picked = tt.tsum(logp * Tensor(onehot)) * -1.0
        return picked / float(max(labels.size, 1))


def _log_softmax(logits: Tensor) -> Tensor:
    shift = logits - Tensor(logits.data.max(axis=-1, keepdims=True))
    return shift - tt.log(tt.tsum(tt.exp(shift), axis=-1, keepdims=True))
