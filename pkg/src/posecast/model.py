"""One-stage transformer decoder over pose rows with placeholder-token inputs.

Input rows are (T, 2N) pose-coordinate vectors. In placeholder mode row 0 is
the initial pose and rows 1..T-1 are copies of a learned [PRD] token that
carries no sample information; timestamp positional encoding is what lets the
model produce distinct outputs per row, and the same input builder runs at
training and inference so the two distributions are identical by construction.
In ntp mode rows are the teacher-forced pose sequence P0..P_{T-1} and the
causal mask is always applied (full attention over teacher-forced rows would
leak the targets), which is the classic next-token setup kept for baselines
and ablations.

The output head reads a displacement per row: relative to P0 in placeholder
mode, relative to that row's input pose in ntp mode. It is zero-initialized,
so an untrained model predicts "no motion".
"""

import math
from dataclasses import dataclass, field, asdict

import torch
from torch import nn

from .errors import ConfigurationError, ContractError
from .skeleton import build_topology

INPUT_MODES = ("placeholder", "ntp")
ATTENTION_MODES = ("full", "causal")
PRD_MODES = ("learned", "zero")


@dataclass(frozen=True)
class ModelConfig:
    topology: str = "body13"
    horizon: int = 45
    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 4
    feedforward_width: int = 256
    dropout: float = 0.0
    attention_mode: str = "causal"
    input_mode: str = "placeholder"
    context_dim: int = 16
    positional_encoding: bool = True
    prd_mode: str = "learned"
    num_joints: int = field(default=None)

    def __post_init__(self):
        for name in ("horizon", "d_model", "n_heads", "n_layers",
                     "feedforward_width", "context_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigurationError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.attention_mode not in ATTENTION_MODES:
            raise ConfigurationError(f"unknown attention_mode {self.attention_mode!r}")
        if self.input_mode not in INPUT_MODES:
            raise ConfigurationError(f"unknown input_mode {self.input_mode!r}")
        if self.prd_mode not in PRD_MODES:
            raise ConfigurationError(f"unknown prd_mode {self.prd_mode!r}")
        if self.num_joints is None:
            object.__setattr__(self, "num_joints", build_topology(self.topology).num_joints)

    @property
    def pose_dim(self):
        return 2 * self.num_joints

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DecoderInput:
    """Batched decoder input rows plus the mode they were built for."""

    rows: torch.Tensor  # (B, T, 2N)
    mode: str

    def __post_init__(self):
        if self.rows.dim() != 3:
            raise ContractError(f"input rows must be (B, T, 2N), got {tuple(self.rows.shape)}")
        if self.mode not in INPUT_MODES:
            raise ConfigurationError(f"unknown input mode {self.mode!r}")


def _as_batched_p0(p0, pose_dim):
    t = torch.as_tensor(p0, dtype=torch.float32)
    if t.dim() == 1:
        t = t[None, :]
    if t.dim() != 2 or t.shape[1] != pose_dim:
        raise ContractError(f"p0 must be (B, {pose_dim}) or ({pose_dim},), got {tuple(t.shape)}")
    return t


def build_input_placeholder(p0, horizon, prd_token):
    """Row 0 = P0, rows 1..T-1 = the placeholder token.

    This is the single input builder used by both the training step and
    generate(); there is no separate inference path.
    """
    if horizon < 1:
        raise ContractError(f"horizon must be >= 1, got {horizon}")
    p0 = _as_batched_p0(p0, prd_token.shape[0])
    rows = prd_token[None, None, :].expand(p0.shape[0], horizon, -1)
    rows = torch.cat([p0[:, None, :], rows[:, 1:, :]], dim=1)
    return DecoderInput(rows=rows, mode="placeholder")


def build_input_ntp(p0, future):
    """Teacher-forced rows P0, P1, ..., P_{T-1} (the future's last frame is
    never an input; it is only a target)."""
    future = torch.as_tensor(future, dtype=torch.float32)
    if future.dim() == 2:
        future = future[None]
    if future.dim() != 3:
        raise ContractError(f"future must be (B, T, 2N), got {tuple(future.shape)}")
    p0 = _as_batched_p0(p0, future.shape[2])
    if p0.shape[0] != future.shape[0]:
        raise ContractError("p0 and future batch sizes differ")
    rows = torch.cat([p0[:, None, :], future[:, :-1, :]], dim=1)
    return DecoderInput(rows=rows, mode="ntp")


def sinusoidal_encoding(length, dim, device=None):
    """Standard fixed sin/cos table, shape (length, dim)."""
    position = torch.arange(length, dtype=torch.float32, device=device)[:, None]
    div = torch.exp(
        torch.arange(0, dim, 2, dtype=torch.float32, device=device)
        * (-math.log(10000.0) / dim)
    )
    enc = torch.zeros(length, dim, device=device)
    enc[:, 0::2] = torch.sin(position * div)
    enc[:, 1::2] = torch.cos(position * div[: enc[:, 1::2].shape[1]])
    return enc


class PoseDecoder(nn.Module):
    """Transformer decoder producing per-timestamp pose displacements.

    forward_calls counts decoder invocations, the instrumentation behind the
    single-forward contract: generate() makes exactly one call regardless of
    horizon, generate_autoregressive() makes exactly T.
    """

    def __init__(self, config):
        super().__init__()
        self.config = config
        d = config.d_model
        self.in_proj = nn.Linear(config.pose_dim, d)
        self.ctx_proj = nn.Linear(config.context_dim, d)
        layer = nn.TransformerDecoderLayer(
            d_model=d,
            nhead=config.n_heads,
            dim_feedforward=config.feedforward_width,
            dropout=config.dropout,
            batch_first=True,
        )
        self.decoder = nn.TransformerDecoder(layer, num_layers=config.n_layers)
        self.head = nn.Linear(d, config.pose_dim)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)
        prd = torch.zeros(config.pose_dim)
        if config.prd_mode == "learned":
            self.prd_token = nn.Parameter(prd)
        else:
            self.register_buffer("prd_token", prd)
        self.forward_calls = 0
        self.last_input_rows = None

    def build_placeholder_input(self, p0, horizon=None):
        horizon = self.config.horizon if horizon is None else horizon
        return build_input_placeholder(p0, horizon, self.prd_token)

    def build_ntp_input(self, p0, future):
        return build_input_ntp(p0, future)

    def _uses_causal_mask(self, mode):
        return mode == "ntp" or self.config.attention_mode == "causal"

    def forward(self, decoder_input, context):
        """Displacements (B, T, 2N) for a DecoderInput and context (B, N_M, d_M)."""
        rows = decoder_input.rows
        if rows.shape[-1] != self.config.pose_dim:
            raise ContractError(
                f"input width {rows.shape[-1]} != model pose dim {self.config.pose_dim}"
            )
        if context.dim() == 2:
            context = context[None]
        if context.shape[-1] != self.config.context_dim:
            raise ContractError(
                f"context width {context.shape[-1]} != model d_M {self.config.context_dim}"
            )
        if context.shape[0] != rows.shape[0]:
            raise ContractError("context and input batch sizes differ")
        self.forward_calls += 1
        self.last_input_rows = rows.detach()

        t = rows.shape[1]
        x = self.in_proj(rows) * math.sqrt(self.config.d_model)
        if self.config.positional_encoding:
            x = x + sinusoidal_encoding(t, self.config.d_model, rows.device)[None]
        mem = self.ctx_proj(context) * math.sqrt(self.config.d_model)
        mem = mem + sinusoidal_encoding(context.shape[1], self.config.d_model,
                                        context.device)[None]
        mask = None
        if self._uses_causal_mask(decoder_input.mode):
            mask = torch.full((t, t), float("-inf"), device=rows.device).triu(1)
        hidden = self.decoder(x, mem, tgt_mask=mask)
        return self.head(hidden)

    def predict_poses(self, decoder_input, context):
        """Displacements turned into absolute poses (B, T, 2N).

        Placeholder mode: every row's displacement is added to P0 (row 0).
        NTP mode: each row's displacement is added to that row's input pose,
        giving the next-frame prediction.
        """
        disp = self.forward(decoder_input, context)
        if decoder_input.mode == "placeholder":
            return decoder_input.rows[:, :1, :] + disp
        return decoder_input.rows + disp

    def generate(self, p0, context, horizon=None):
        """All future poses from one decoder forward (placeholder input)."""
        inp = self.build_placeholder_input(p0, horizon)
        if context.dim() == 2:
            context = context[None].expand(inp.rows.shape[0], -1, -1)
        return self.predict_poses(inp, context)

    def generate_autoregressive(self, p0, context, horizon=None):
        """NTP-style inference: T forwards, each feeding back its own output."""
        horizon = self.config.horizon if horizon is None else horizon
        p0 = _as_batched_p0(p0, self.config.pose_dim)
        if context.dim() == 2:
            context = context[None].expand(p0.shape[0], -1, -1)
        rows = p0[:, None, :]
        preds = []
        for _ in range(horizon):
            disp = self.forward(DecoderInput(rows=rows, mode="ntp"), context)
            nxt = rows[:, -1, :] + disp[:, -1, :]
            preds.append(nxt)
            rows = torch.cat([rows, nxt[:, None, :]], dim=1)
        return torch.stack(preds, dim=1)

    def parameter_count(self):
        return sum(p.numel() for p in self.parameters())


def make_model(config, seed=None):
    """Construct a PoseDecoder with reproducible initialization."""
    if seed is not None:
        torch.manual_seed(seed)
    return PoseDecoder(config)
