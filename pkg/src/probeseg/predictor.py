"""
Convolutional predictor with interaction-score, force and embedding heads.

The trainer never computes a loss. It supplies ascent directions for the three head
outputs (see ``probeseg.headgrads``) and :func:`backward` pushes their negation through
the network, leaving descent gradients on the parameters for Adam.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
import torch
from numpy.typing import NDArray
from torch import nn

from probeseg.exceptions import MissingActivationsError, ShapeMismatchError
from probeseg.imaging import DEPTH_FAR_PLANE, DepthMap, ImageRGB

logger = logging.getLogger(__name__)

DEFAULT_LR = 5e-4
DEFAULT_WEIGHT_DECAY = 1e-4


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 300
    output_size: int = 100
    in_channels: int = 4
    stem_channels: int = 32
    block_channels: tuple[int, ...] = (64, 128, 256)
    decoder_channels: int = 64
    trunk_channels: int = 128
    embed_dim: int = 16
    force_classes: int = 3
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self) -> None:
        if self.input_size != 3 * self.output_size:
            raise ShapeMismatchError(
                "Input resolution must be three times the output resolution",
                details=f"input={self.input_size} output={self.output_size}",
            )
        if self.force_classes != 3:
            raise ShapeMismatchError(f"Expected 3 force classes, got {self.force_classes}")
        if len(self.block_channels) != 3:
            raise ShapeMismatchError("Expected three encoder blocks")

    @classmethod
    def tiny(cls) -> ModelConfig:
        """Small network for gradient checks and smoke runs."""
        return cls(
            input_size=48,
            output_size=16,
            stem_channels=4,
            block_channels=(8, 8, 8),
            decoder_channels=8,
            trunk_channels=8,
            embed_dim=4,
        )

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["block_channels"] = list(self.block_channels)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ModelConfig:
        values = dict(data)
        if "block_channels" in values:
            values["block_channels"] = tuple(int(c) for c in values["block_channels"])
        return cls(**values)


class ConvBNReLU(nn.Sequential):
    def __init__(
        self,
        cin: int,
        cout: int,
        kernel: int,
        stride: int = 1,
        padding: int = 0,
        momentum: float = 0.1,
        eps: float = 1e-5,
    ) -> None:
        super().__init__(
            nn.Conv2d(cin, cout, kernel, stride=stride, padding=padding, bias=False),
            nn.BatchNorm2d(cout, momentum=momentum, eps=eps),
            nn.ReLU(),
        )


class DownBlock(nn.Module):
    """3x3, 1x1, residual add of the block input, then a strided 3x3 to the output width."""

    def __init__(self, cin: int, cout: int, momentum: float, eps: float) -> None:
        super().__init__()
        self.conv1 = ConvBNReLU(cin, cin, 3, padding=1, momentum=momentum, eps=eps)
        self.conv2 = ConvBNReLU(cin, cin, 1, momentum=momentum, eps=eps)
        self.conv3 = ConvBNReLU(cin, cout, 3, stride=2, padding=1, momentum=momentum, eps=eps)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # an output cell depends on at most a 136x136 box of input pixels
        return self.conv3(self.conv2(self.conv1(x)) + x)


class UpBlock(nn.Module):
    """2x2 transposed conv, crop to the lateral input, concatenate, 3x3 conv."""

    def __init__(self, cin: int, lateral: int, cout: int, momentum: float, eps: float) -> None:
        super().__init__()
        self.up = nn.Sequential(
            nn.ConvTranspose2d(cin, lateral, 2, stride=2, bias=False),
            nn.BatchNorm2d(lateral, momentum=momentum, eps=eps),
            nn.ReLU(),
        )
        self.conv = ConvBNReLU(2 * lateral, cout, 3, padding=1, momentum=momentum, eps=eps)

    def forward(self, x: torch.Tensor, lateral: torch.Tensor) -> torch.Tensor:
        y = self.up(x)[..., : lateral.shape[-2], : lateral.shape[-1]]
        return self.conv(torch.cat([y, lateral], dim=1))


class Predictor(nn.Module):
    def __init__(self, config: ModelConfig | None = None) -> None:
        super().__init__()
        self.config = config = config or ModelConfig()
        mom, eps = config.bn_momentum, config.bn_eps
        c0 = config.stem_channels
        c1, c2, c3 = config.block_channels

        self.stem = ConvBNReLU(
            config.in_channels, c0, 5, stride=3, padding=1, momentum=mom, eps=eps
        )
        self.down1 = DownBlock(c0, c1, mom, eps)
        self.down2 = DownBlock(c1, c2, mom, eps)
        self.down3 = DownBlock(c2, c3, mom, eps)
        self.up3 = UpBlock(c3, c2, c2, mom, eps)
        self.up2 = UpBlock(c2, c1, c1, mom, eps)
        self.up1 = UpBlock(c1, c0, config.decoder_channels, mom, eps)
        self.trunk = ConvBNReLU(
            config.decoder_channels + 2, config.trunk_channels, 1, momentum=mom, eps=eps
        )
        self.score_head = nn.Conv2d(config.trunk_channels, 1, 1)
        self.force_head = nn.Conv2d(config.trunk_channels, config.force_classes, 1)
        self.embed_head = nn.Conv2d(config.trunk_channels, config.embed_dim, 1)
        self._init_weights()

    def _init_weights(self) -> None:
        for module in self.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
                nn.init.kaiming_uniform_(module.weight, nonlinearity="relu")
                if module.bias is not None:
                    nn.init.zeros_(module.bias)
            elif isinstance(module, nn.BatchNorm2d):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)

    @staticmethod
    def coordinates(x: torch.Tensor) -> torch.Tensor:
        """Two channels (x then y), each linear in [-1, 1] across the grid."""
        n, _, h, w = x.shape
        ys = torch.linspace(-1.0, 1.0, h, dtype=x.dtype, device=x.device)
        xs = torch.linspace(-1.0, 1.0, w, dtype=x.dtype, device=x.device)
        grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
        return torch.stack([grid_x, grid_y]).unsqueeze(0).expand(n, -1, -1, -1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        cfg = self.config
        if x.ndim != 4 or x.shape[1:] != (cfg.in_channels, cfg.input_size, cfg.input_size):
            raise ShapeMismatchError(
                "Input does not match the model configuration",
                details=f"expected (N, {cfg.in_channels}, {cfg.input_size}, {cfg.input_size}), "
                f"got {tuple(x.shape)}",
            )
        x0 = self.stem(x)
        x1 = self.down1(x0)
        x2 = self.down2(x1)
        x3 = self.down3(x2)
        y = self.up3(x3, x2)
        y = self.up2(y, x1)
        y = self.up1(y, x0)
        y = self.trunk(torch.cat([y, self.coordinates(y)], dim=1))
        return self.score_head(y)[:, 0], self.force_head(y), self.embed_head(y)


def build_model(config: ModelConfig | None = None, seed: int = 0) -> Predictor:
    """He-uniform initialized predictor, reproducible from ``seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = Predictor(config)
    logger.debug(f"Built predictor with {parameter_count(model):,} parameters")
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


# --- forward / backward ---------------------------------------------------


@dataclass(frozen=True)
class ForwardOut:
    """Head outputs for one image: s (H, W), m (3, H, W), e (D, H, W)."""

    s: NDArray[np.float64]
    m: NDArray[np.float64]
    e: NDArray[np.float64]


@dataclass
class RetainedPass:
    """A batched forward pass, optionally holding its graph for one backward call."""

    model: Predictor
    inputs: torch.Tensor
    s: torch.Tensor
    m: torch.Tensor
    e: torch.Tensor
    retained: bool = False

    def __len__(self) -> int:
        return int(self.s.shape[0])

    def outputs(self, index: int = 0) -> ForwardOut:
        return ForwardOut(
            s=self.s[index].detach().double().numpy(),
            m=self.m[index].detach().double().numpy(),
            e=self.e[index].detach().double().numpy(),
        )


def prepare_inputs(
    rgb: ImageRGB | Sequence[ImageRGB], depth: DepthMap | Sequence[DepthMap]
) -> torch.Tensor:
    """Stack RGB and depth/5 m into an (N, 4, H, W) float32 batch."""
    rgbs = np.asarray(rgb, dtype=np.float32)
    depths = np.asarray(depth, dtype=np.float32)
    if rgbs.ndim == 3:
        rgbs, depths = rgbs[None], depths[None]
    if rgbs.shape[:3] != depths.shape:
        raise ShapeMismatchError(
            "RGB and depth sizes differ", details=f"{rgbs.shape[:3]} vs {depths.shape}"
        )
    stacked = np.concatenate([rgbs, (depths / DEPTH_FAR_PLANE)[..., None]], axis=-1)
    return torch.from_numpy(np.ascontiguousarray(stacked.transpose(0, 3, 1, 2)))


def forward(
    model: Predictor,
    rgb: ImageRGB | Sequence[ImageRGB],
    depth: DepthMap | Sequence[DepthMap],
    mode: str = "eval",
    retain: bool | None = None,
    input_grad: bool = False,
) -> RetainedPass:
    """
    Run the predictor on one image or a batch.

    Train mode normalizes with batch statistics and retains the graph; eval mode uses the
    running statistics and, unless ``retain`` is set, keeps no graph.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if retain is None:
        retain = mode == "train"
    model.train(mode == "train")
    x = prepare_inputs(rgb, depth).to(dtype=next(model.parameters()).dtype)
    if input_grad:
        x.requires_grad_(True)
    with torch.set_grad_enabled(retain):
        s, m, e = model(x)
    return RetainedPass(model=model, inputs=x, s=s, m=m, e=e, retained=retain)


def backward(
    forward_pass: RetainedPass,
    g_s: NDArray[np.floating] | torch.Tensor,
    g_m: NDArray[np.floating] | torch.Tensor,
    g_e: NDArray[np.floating] | torch.Tensor,
) -> dict[str, torch.Tensor]:
    """
    Backpropagate injected head gradients.

    ``g_*`` are ascent directions shaped like the batch outputs. Parameter ``.grad`` is set
    to the descent gradient J^T(-g) and returned by name. The pass can be used once.
    """
    if not forward_pass.retained:
        raise MissingActivationsError(
            "No retained forward pass to backpropagate through",
            details="run forward with retain=True (train mode retains by default)",
        )
    outputs = (forward_pass.s, forward_pass.m, forward_pass.e)
    injected = []
    for out, g in zip(outputs, (g_s, g_m, g_e)):
        grad = torch.as_tensor(g, dtype=out.dtype)
        if grad.shape != out.shape:
            raise ShapeMismatchError(
                "Injected gradient does not match its head",
                details=f"{tuple(grad.shape)} vs {tuple(out.shape)}",
            )
        injected.append(-grad)

    model = forward_pass.model
    model.zero_grad(set_to_none=False)
    torch.autograd.backward(list(outputs), grad_tensors=injected)
    forward_pass.retained = False
    return {
        name: (p.grad if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    }


# --- optimizer ------------------------------------------------------------


def make_optimizer(
    model: nn.Module, lr: float = DEFAULT_LR, weight_decay: float = DEFAULT_WEIGHT_DECAY
) -> torch.optim.Adam:
    """Adam with weight decay added to the gradient (coupled L2)."""
    return torch.optim.Adam(model.parameters(), lr=lr, weight_decay=weight_decay)


def adam_step(
    optimizer: torch.optim.Optimizer,
    grads: Mapping[torch.nn.Parameter, torch.Tensor] | None = None,
) -> None:
    """One Adam update, optionally from explicitly supplied gradients."""
    if grads is not None:
        for p, g in grads.items():
            p.grad = g.detach().clone()
    optimizer.step()


def gradient_norm(grads: Mapping[str, torch.Tensor]) -> float:
    total = sum(float(torch.sum(g.double() ** 2)) for g in grads.values())
    return float(np.sqrt(total))
