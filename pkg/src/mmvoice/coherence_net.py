"""Toy-scale cross-modal contrastive coherence network.

Modality-specific encoders (deformable-conv stems + small ViT), frequency-
aware patch weighting on the mmWave branch, bidirectional cross-modal
attention, symmetric InfoNCE + lag-searched NCC losses, SGD training, and
cosine coherence scoring. Everything runs in 64-bit floats on CPU.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .align_spec import MelConfig, MelSegmentPair, mel_band_centers_hz
from .errors import (ContractViolationError, InvalidConfigError,
                     InvalidInputError, UntrainedModelError)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class FreqWeightConfig:
    """Patch-row band boundaries and fixed weights for the mmWave branch."""

    r_low: int = 3
    r_mid: int = 5
    w_low: float = 0.7
    w_mid: float = 1.0
    w_high: float = 0.3

    def validate(self, n_rows: int):
        if not (0 < self.r_low < self.r_mid < n_rows):
            raise InvalidConfigError("need 0 < r_low < r_mid < n_patch_rows")


def freq_band_rows(mel_cfg: MelConfig, patch: int,
                   low_hz: float = 1000.0, mid_hz: float = 3000.0) -> tuple[int, int]:
    """Patch-row boundaries: rows whose center frequency falls below 1 kHz
    are 'low', below 3 kHz 'mid', the rest 'high'."""
    centers = mel_band_centers_hz(mel_cfg)
    n_rows = mel_cfg.n_mels // patch
    row_centers = centers[:n_rows * patch].reshape(n_rows, patch).mean(axis=1)
    r_low = int(np.sum(row_centers < low_hz))
    r_mid = int(np.sum(row_centers < mid_hz))
    return max(1, r_low), max(2, min(r_mid, n_rows - 1))


@dataclass
class ModelConfig:
    n_mels: int = 64
    n_frames: int = 30
    patch: int = 8
    dim: int = 64
    depth: int = 2
    heads: int = 4
    mlp_ratio: float = 2.0
    stem_channels: int = 6
    audio_kernel: int = 3
    mmw_kernel: int = 5
    deform_groups: tuple[int, int] = (1, 2)
    freq: FreqWeightConfig = field(default_factory=FreqWeightConfig)
    kappa_init: float = 0.05

    def validate(self):
        if self.n_mels % self.patch != 0:
            raise InvalidConfigError("n_mels must be a multiple of the patch size")
        if self.dim % self.heads != 0:
            raise InvalidConfigError("dim must be a multiple of heads")
        self.freq.validate(self.n_mels // self.patch)

    @property
    def padded_frames(self) -> int:
        return int(math.ceil(self.n_frames / self.patch)) * self.patch

    @property
    def grid(self) -> tuple[int, int]:
        return self.n_mels // self.patch, self.padded_frames // self.patch

    @property
    def n_patches(self) -> int:
        r, c = self.grid
        return r * c


@dataclass
class TrainConfig:
    lambda_loss: float = 0.5
    lag_window: int = 3
    batch_size: int = 32
    steps: int = 600
    lr: float = 3e-3
    seed: int = 0
    # bounds on the learnable temperature: an unconstrained kappa lets the
    # optimizer flatten the softmax instead of separating the pairs
    kappa_min: float = 0.02
    kappa_max: float = 0.3

    def validate(self):
        if self.lambda_loss < 0 or self.lag_window < 0:
            raise InvalidConfigError("lambda_loss and lag_window must be >= 0")
        if self.batch_size < 1 or self.steps < 0 or self.lr <= 0:
            raise InvalidConfigError("batch_size >= 1, steps >= 0, lr > 0 required")


@dataclass
class TokenSeq:
    """Encoder output: class token first, then row-major patch tokens."""

    tokens: torch.Tensor          # (B, N+1, dim)
    modality: str                 # "audio" | "mmwave"
    grid: tuple[int, int]


@dataclass
class CMAOutput:
    emb_audio: torch.Tensor       # (B, dim), unit rows
    emb_mmw: torch.Tensor
    t_mic: torch.Tensor           # (B, time_cols)
    t_mmw: torch.Tensor
    attn_audio_to_mmw: torch.Tensor   # (B, heads, N+1, N+1)
    attn_mmw_to_audio: torch.Tensor


@dataclass
class LossBreakdown:
    info_nce: torch.Tensor
    ncc: torch.Tensor
    total: torch.Tensor


# ---------------------------------------------------------------------------
# Deformable convolution
# ---------------------------------------------------------------------------

class DeformConv2d(nn.Module):
    """Deformable 2D convolution with learned per-tap offsets.

    A standard convolution over the input predicts one (dy, dx) offset per
    kernel tap per location (per deformable group); samples are gathered by
    bilinear interpolation with out-of-bounds positions reading as zero.
    Zero offsets reduce exactly to a standard same-padded convolution.
    """

    def __init__(self, in_ch: int, out_ch: int, kernel: int, groups: int = 1):
        super().__init__()
        if in_ch % groups != 0:
            raise InvalidConfigError("in_ch must be divisible by deformable groups")
        self.in_ch, self.out_ch, self.kernel, self.groups = in_ch, out_ch, kernel, groups
        self.weight = nn.Parameter(torch.zeros(out_ch, in_ch, kernel, kernel,
                                               dtype=torch.float64))
        self.bias = nn.Parameter(torch.zeros(out_ch, dtype=torch.float64))
        self.offset_conv = nn.Conv2d(in_ch, 2 * groups * kernel * kernel, kernel,
                                     padding=kernel // 2, dtype=torch.float64)

    def forward(self, x: torch.Tensor,
                offsets: torch.Tensor | None = None) -> torch.Tensor:
        b, c, h, w = x.shape
        k, g = self.kernel, self.groups
        if k > h or k > w:
            raise InvalidConfigError("kernel larger than the input feature map")
        if offsets is None:
            offsets = self.offset_conv(x)
        off = offsets.reshape(b, g, k * k, 2, h, w)

        pad = k // 2
        ky, kx = torch.meshgrid(torch.arange(k, dtype=torch.float64),
                                torch.arange(k, dtype=torch.float64), indexing="ij")
        rel_y = (ky - pad).reshape(1, 1, k * k, 1, 1)
        rel_x = (kx - pad).reshape(1, 1, k * k, 1, 1)
        base_y = torch.arange(h, dtype=torch.float64).reshape(1, 1, 1, h, 1)
        base_x = torch.arange(w, dtype=torch.float64).reshape(1, 1, 1, 1, w)
        py = base_y + rel_y + off[:, :, :, 0]          # (B, G, K2, H, W)
        px = base_x + rel_x + off[:, :, :, 1]

        sampled = self._bilinear_gather(x, py, px)      # (B, C, K2, H, W)
        wmat = self.weight.reshape(self.out_ch, self.in_ch, k * k)
        out = torch.einsum("bikhw,oik->bohw", sampled, wmat)
        return out + self.bias.reshape(1, -1, 1, 1)

    def _bilinear_gather(self, x: torch.Tensor, py: torch.Tensor,
                         px: torch.Tensor) -> torch.Tensor:
        # bilinear sampling with zero out-of-bounds == grid_sample with
        # zero padding; align_corners=True maps [-1, 1] onto [0, size-1]
        b, c, h, w = x.shape
        g = self.groups
        cg = c // g
        k2 = py.shape[2]
        gx = 2.0 * px / max(w - 1, 1) - 1.0
        gy = 2.0 * py / max(h - 1, 1) - 1.0
        grid = torch.stack([gx, gy], dim=-1).reshape(b * g, k2 * h, w, 2)
        sampled = F.grid_sample(x.reshape(b * g, cg, h, w), grid,
                                mode="bilinear", padding_mode="zeros",
                                align_corners=True)
        return sampled.reshape(b, c, k2, h, w)


def standard_conv_reference(x: torch.Tensor, layer: DeformConv2d) -> torch.Tensor:
    """Same-padded direct convolution with the layer's weights (oracle for
    the zero-offset reduction)."""
    return F.conv2d(x, layer.weight, layer.bias, padding=layer.kernel // 2)


# ---------------------------------------------------------------------------
# Transformer pieces
# ---------------------------------------------------------------------------

class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.q = nn.Linear(dim, dim, dtype=torch.float64)
        self.k = nn.Linear(dim, dim, dtype=torch.float64)
        self.v = nn.Linear(dim, dim, dtype=torch.float64)
        self.o = nn.Linear(dim, dim, dtype=torch.float64)

    def forward(self, query: torch.Tensor, kv: torch.Tensor,
                collect: list | None = None) -> torch.Tensor:
        b, nq, d = query.shape
        nk = kv.shape[1]
        q = self.q(query).reshape(b, nq, self.heads, self.head_dim).transpose(1, 2)
        k = self.k(kv).reshape(b, nk, self.heads, self.head_dim).transpose(1, 2)
        v = self.v(kv).reshape(b, nk, self.heads, self.head_dim).transpose(1, 2)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(self.head_dim), dim=-1)
        if collect is not None:
            collect.append(attn)
        out = (attn @ v).transpose(1, 2).reshape(b, nq, d)
        return self.o(out)


class TransformerBlock(nn.Module):
    """Pre-norm ViT block: MSA and MLP with residual connections."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim, dtype=torch.float64)
        self.attn = MultiHeadAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim, dtype=torch.float64)
        self.mlp = nn.Sequential(
            nn.Linear(dim, hidden, dtype=torch.float64),
            nn.GELU(),
            nn.Linear(hidden, dim, dtype=torch.float64),
        )

    def forward(self, x: torch.Tensor, collect: list | None = None) -> torch.Tensor:
        y = self.norm1(x)
        x = x + self.attn(y, y, collect)
        return x + self.mlp(self.norm2(x))


class ModalityEncoder(nn.Module):
    """Two deformable-conv layers, patch embedding, class token, position
    embeddings, and a small transformer stack."""

    def __init__(self, cfg: ModelConfig, kernel: int):
        super().__init__()
        ch = cfg.stem_channels
        g1, g2 = cfg.deform_groups
        self.stem1 = DeformConv2d(1, ch, kernel, groups=g1)
        self.stem2 = DeformConv2d(ch, ch, kernel, groups=g2)
        self.patch = cfg.patch
        self.embed = nn.Linear(ch * cfg.patch * cfg.patch, cfg.dim, dtype=torch.float64)
        self.cls = nn.Parameter(torch.zeros(1, 1, cfg.dim, dtype=torch.float64))
        self.pos = nn.Parameter(torch.zeros(1, cfg.n_patches + 1, cfg.dim,
                                            dtype=torch.float64))
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.dim, cfg.heads, cfg.mlp_ratio)
            for _ in range(cfg.depth)
        )
        self.norm = nn.LayerNorm(cfg.dim, dtype=torch.float64)
        self.grid = cfg.grid
        self.padded_frames = cfg.padded_frames

    def forward(self, spec: torch.Tensor, collect: list | None = None) -> torch.Tensor:
        b, _, h, w = spec.shape
        if w < self.padded_frames:
            spec = F.pad(spec, (0, self.padded_frames - w))
        x = torch.tanh(self.stem1(spec))
        x = torch.tanh(self.stem2(x))
        patches = F.unfold(x, self.patch, stride=self.patch).transpose(1, 2)
        tokens = self.embed(patches)
        tokens = torch.cat([self.cls.expand(b, -1, -1), tokens], dim=1) + self.pos
        for blk in self.blocks:
            tokens = blk(tokens, collect)
        return self.norm(tokens)


# ---------------------------------------------------------------------------
# Full model
# ---------------------------------------------------------------------------

class CoherenceNet(nn.Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.audio_encoder = ModalityEncoder(cfg, cfg.audio_kernel)
        self.mmw_encoder = ModalityEncoder(cfg, cfg.mmw_kernel)
        self.cma_a2m = MultiHeadAttention(cfg.dim, cfg.heads)
        self.cma_m2a = MultiHeadAttention(cfg.dim, cfg.heads)
        self.cma_norm_a = nn.LayerNorm(cfg.dim, dtype=torch.float64)
        self.cma_norm_m = nn.LayerNorm(cfg.dim, dtype=torch.float64)
        self.proj_audio = nn.Linear(cfg.dim, cfg.dim, dtype=torch.float64)
        self.proj_mmw = nn.Linear(cfg.dim, cfg.dim, dtype=torch.float64)
        self.log_kappa = nn.Parameter(
            torch.tensor(math.log(cfg.kappa_init), dtype=torch.float64))
        self.steps_trained = 0
        self.init_seed = seed
        self._init_params(seed)

    @property
    def kappa(self) -> torch.Tensor:
        return self.log_kappa.exp()

    def _init_params(self, seed: int):
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, p in sorted(self.named_parameters(), key=lambda kv: kv[0]):
                if "offset_conv" in name:
                    p.zero_()          # offsets start at zero: standard conv
                elif name.endswith((".cls", ".pos")):
                    # zero: a shared nonzero token would dominate every class
                    # embedding at init and start training at a collapse point
                    p.zero_()
                elif p.dim() > 1:
                    fan_in = p.shape[1:].numel()
                    p.normal_(0.0, fan_in ** -0.5, generator=g)
                else:
                    p.zero_()
            self.log_kappa.fill_(math.log(self.cfg.kappa_init))
            for ln in self.modules():
                if isinstance(ln, nn.LayerNorm):
                    ln.weight.fill_(1.0)
                    ln.bias.zero_()

    # -- encoding -----------------------------------------------------------

    def encode(self, spec: torch.Tensor, modality: str,
               collect: list | None = None) -> TokenSeq:
        if modality not in ("audio", "mmwave"):
            raise InvalidInputError(f"unknown modality {modality!r}")
        cfg = self.cfg
        if spec.ndim == 3:
            spec = spec.unsqueeze(1)
        if spec.shape[-2] != cfg.n_mels or spec.shape[-1] != cfg.n_frames:
            raise InvalidInputError(
                f"expected {cfg.n_mels}x{cfg.n_frames} spectrogram, "
                f"got {tuple(spec.shape[-2:])}")
        enc = self.audio_encoder if modality == "audio" else self.mmw_encoder
        return TokenSeq(enc(spec.to(torch.float64), collect), modality, cfg.grid)

    def freq_weight(self, seq: TokenSeq) -> TokenSeq:
        """Scale mmWave patch tokens by their frequency-band weight; the
        class token passes through untouched."""
        if seq.modality != "mmwave":
            raise ContractViolationError("frequency weighting applies to mmWave only")
        fw = self.cfg.freq
        rows, cols = seq.grid
        row_of = torch.arange(rows * cols) // cols
        w = torch.full((rows * cols,), fw.w_high, dtype=torch.float64)
        w[row_of < fw.r_mid] = fw.w_mid
        w[row_of < fw.r_low] = fw.w_low
        tokens = torch.cat(
            [seq.tokens[:, :1], seq.tokens[:, 1:] * w.reshape(1, -1, 1)], dim=1)
        return TokenSeq(tokens, seq.modality, seq.grid)

    # -- cross-modal attention ---------------------------------------------

    def cma(self, audio_seq: TokenSeq, mmw_seq: TokenSeq) -> CMAOutput:
        if audio_seq.tokens.shape != mmw_seq.tokens.shape:
            raise InvalidInputError("CMA needs equally shaped token sequences")
        if audio_seq.tokens.shape[1] != self.cfg.n_patches + 1:
            raise InvalidInputError("token count does not match the configured grid")
        attns_a, attns_m = [], []
        a_tok = audio_seq.tokens
        m_tok = mmw_seq.tokens
        raw_a = a_tok + self.cma_a2m(a_tok, m_tok, attns_a)
        raw_m = m_tok + self.cma_m2a(m_tok, a_tok, attns_m)
        out_a = self.cma_norm_a(raw_a)
        out_m = self.cma_norm_m(raw_m)

        emb_a = F.normalize(self.proj_audio(out_a[:, 0]), dim=-1)
        emb_m = F.normalize(self.proj_mmw(out_m[:, 0]), dim=-1)

        # temporal features pool the pre-norm residual stream: LayerNorm
        # zeroes each token's channel mean, which would null this signal
        rows, cols = audio_seq.grid
        b = a_tok.shape[0]
        t_mic = raw_a[:, 1:].reshape(b, rows, cols, -1).mean(dim=(1, 3))
        t_mmw = raw_m[:, 1:].reshape(b, rows, cols, -1).mean(dim=(1, 3))
        return CMAOutput(emb_a, emb_m, t_mic, t_mmw, attns_a[0], attns_m[0])

    def forward(self, audio_spec: torch.Tensor, mmw_spec: torch.Tensor) -> CMAOutput:
        a = self.encode(audio_spec, "audio")
        m = self.freq_weight(self.encode(mmw_spec, "mmwave"))
        return self.cma(a, m)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def _check_unit_rows(x: torch.Tensor, label: str):
    norms = x.norm(dim=-1)
    if not torch.allclose(norms, torch.ones_like(norms), atol=1e-6):
        raise ContractViolationError(f"{label} rows must be L2-normalized")


def info_nce(emb_a: torch.Tensor, emb_m: torch.Tensor,
             kappa: torch.Tensor | float) -> torch.Tensor:
    """Symmetric temperature-scaled contrastive loss over the cosine
    similarity matrix of two aligned embedding batches."""
    if emb_a.shape != emb_m.shape or emb_a.shape[0] < 1:
        raise InvalidInputError("need equally sized, nonempty embedding batches")
    _check_unit_rows(emb_a, "audio embeddings")
    _check_unit_rows(emb_m, "mmWave embeddings")
    kappa_t = kappa if isinstance(kappa, torch.Tensor) else torch.tensor(float(kappa))
    logits = emb_a @ emb_m.T / kappa_t
    target = torch.arange(emb_a.shape[0])
    return 0.5 * (F.cross_entropy(logits, target) + F.cross_entropy(logits.T, target))


def ncc_loss(t_mic: torch.Tensor, t_mmw: torch.Tensor,
             lag_window: int) -> tuple[torch.Tensor, bool]:
    """1 - max_{|k| <= lag_window} NCC(t_mic, t_mmw, k) on mean-removed,
    norm-divided overlaps. A constant sequence has zero correlation by
    definition: the loss is 1 and the pair is flagged."""
    if t_mic.numel() != t_mmw.numel() or t_mic.numel() < 2:
        raise InvalidInputError("need equal-length sequences of at least 2 samples")
    n = t_mic.numel()
    if torch.allclose(t_mic, t_mic[0].expand_as(t_mic)) or \
            torch.allclose(t_mmw, t_mmw[0].expand_as(t_mmw)):
        return torch.ones((), dtype=t_mic.dtype), True
    best = None
    for k in range(-lag_window, lag_window + 1):
        if k >= 0:
            a, b = t_mic[k:], t_mmw[:n - k]
        else:
            a, b = t_mic[:n + k], t_mmw[-k:]
        if a.numel() < 2:
            continue
        am = a - a.mean()
        bm = b - b.mean()
        denom = am.norm() * bm.norm()
        if denom.item() <= 0:
            continue
        ncc = (am * bm).sum() / denom
        best = ncc if best is None else torch.maximum(best, ncc)
    if best is None:
        return torch.ones((), dtype=t_mic.dtype), True
    return 1.0 - best, False


def total_loss(audio_specs: torch.Tensor, mmw_specs: torch.Tensor,
               model: CoherenceNet, cfg: TrainConfig) -> tuple[torch.Tensor, LossBreakdown]:
    """Full forward pass and combined objective L = L_infonce + lambda * L_ncc."""
    if audio_specs.shape[0] == 0:
        raise InvalidInputError("empty batch")
    out = model(audio_specs, mmw_specs)
    l_info = info_nce(out.emb_audio, out.emb_mmw, model.kappa)
    ncc_terms = [ncc_loss(out.t_mic[i], out.t_mmw[i], cfg.lag_window)[0]
                 for i in range(audio_specs.shape[0])]
    l_ncc = torch.stack(ncc_terms).mean()
    total = l_info + cfg.lambda_loss * l_ncc
    return total, LossBreakdown(l_info, l_ncc, total)


def score(pair: MelSegmentPair, model: CoherenceNet) -> float:
    """Cosine coherence of one aligned segment pair under trained params."""
    a, m = pairs_to_tensors([pair])
    with torch.no_grad():
        out = model(a, m)
        return float((out.emb_audio * out.emb_mmw).sum())


def score_batch(audio_specs: torch.Tensor, mmw_specs: torch.Tensor,
                model: CoherenceNet) -> np.ndarray:
    with torch.no_grad():
        out = model(audio_specs, mmw_specs)
        return (out.emb_audio * out.emb_mmw).sum(dim=-1).numpy()


# ---------------------------------------------------------------------------
# Data plumbing and training
# ---------------------------------------------------------------------------

def _standardize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / (x.std() + 1e-8)


def pairs_to_tensors(pairs: list[MelSegmentPair]) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-segment standardized float64 tensors (N, 1, n_mels, n_frames)."""
    if not pairs:
        raise InvalidInputError("no segment pairs given")
    a = np.stack([_standardize(p.audio_spec) for p in pairs])[:, None]
    m = np.stack([_standardize(p.mmw_spec) for p in pairs])[:, None]
    return torch.from_numpy(a).double(), torch.from_numpy(m).double()


@dataclass
class TrainResult:
    history: list[tuple[int, float, float, float]]
    final_loss: float


def train_model(model: CoherenceNet, audio_t: torch.Tensor, mmw_t: torch.Tensor,
                cfg: TrainConfig) -> TrainResult:
    """Seeded fixed-step Adam on the combined loss; single-threaded and
    deterministic for a fixed seed.

    Plain SGD reliably falls into the uniform-similarity collapse of the
    contrastive objective at this scale; Adam escapes it within a few
    hundred steps, so the update rule is hand-rolled Adam with fixed
    hyperparameters.
    """
    cfg.validate()
    n = audio_t.shape[0]
    if n == 0:
        raise InvalidInputError("empty training set")
    prev_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    rng = np.random.default_rng(cfg.seed)
    params = [p for _, p in sorted(model.named_parameters(), key=lambda kv: kv[0])]
    m_buf = [torch.zeros_like(p) for p in params]
    v_buf = [torch.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    history = []
    final = math.nan
    try:
        for step in range(cfg.steps):
            idx = rng.choice(n, size=min(cfg.batch_size, n), replace=n < cfg.batch_size)
            loss, parts = total_loss(audio_t[idx], mmw_t[idx], model, cfg)
            model.zero_grad(set_to_none=True)
            loss.backward()
            t = step + 1
            with torch.no_grad():
                for p, mb, vb in zip(params, m_buf, v_buf):
                    if p.grad is None:
                        continue
                    mb.mul_(beta1).add_(p.grad, alpha=1 - beta1)
                    vb.mul_(beta2).addcmul_(p.grad, p.grad, value=1 - beta2)
                    m_hat = mb / (1 - beta1**t)
                    v_hat = vb / (1 - beta2**t)
                    p.addcdiv_(m_hat, v_hat.sqrt().add_(eps), value=-cfg.lr)
                model.log_kappa.clamp_(math.log(cfg.kappa_min),
                                       math.log(cfg.kappa_max))
            final = float(loss.detach())
            history.append((step, final, float(parts.info_nce.detach()),
                            float(parts.ncc.detach())))
        model.steps_trained += cfg.steps
    finally:
        torch.set_num_threads(prev_threads)
    return TrainResult(history, final)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

MODEL_FORMAT = "mmvoice-model-v1"


def save_model(model: CoherenceNet, bin_path: str | Path,
               extra: dict | None = None) -> Path:
    """Flat little-endian float64 blob + JSON manifest (same stem, .json)."""
    bin_path = Path(bin_path)
    tensors = []
    offset = 0
    chunks = []
    for name, p in model.state_dict().items():
        arr = p.detach().numpy().astype("<f8")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        chunks.append(arr.ravel())
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    blob = np.concatenate(chunks) if chunks else np.zeros(0, dtype="<f8")
    blob.astype("<f8").tofile(bin_path)

    cfg_dict = asdict(model.cfg)
    manifest = {
        "format": MODEL_FORMAT,
        "dtype": "<f8",
        "tensors": tensors,
        "config": cfg_dict,
        "seed": model.init_seed,
        "steps": model.steps_trained,
        "param_count": model.parameter_count(),
    }
    if extra:
        manifest.update(extra)
    manifest_path = bin_path.with_suffix(".json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest_path


def load_model(bin_path: str | Path) -> tuple[CoherenceNet, dict]:
    bin_path = Path(bin_path)
    manifest = json.loads(bin_path.with_suffix(".json").read_text())
    if manifest.get("format") != MODEL_FORMAT:
        raise InvalidInputError("unrecognized model manifest format")
    cfg_d = dict(manifest["config"])
    cfg_d["freq"] = FreqWeightConfig(**cfg_d["freq"])
    cfg_d["deform_groups"] = tuple(cfg_d["deform_groups"])
    cfg = ModelConfig(**cfg_d)
    model = CoherenceNet(cfg, seed=int(manifest.get("seed", 0)))
    blob = np.fromfile(bin_path, dtype="<f8")
    state = {}
    for t in manifest["tensors"]:
        size = int(np.prod(t["shape"])) if t["shape"] else 1
        arr = blob[t["offset"]:t["offset"] + size].reshape(t["shape"])
        state[t["name"]] = torch.from_numpy(arr.copy())
    model.load_state_dict(state)
    model.steps_trained = int(manifest.get("steps", 0))
    return model, manifest


def require_trained(model: CoherenceNet):
    if model.steps_trained <= 0:
        raise UntrainedModelError("operation requires trained parameters")
