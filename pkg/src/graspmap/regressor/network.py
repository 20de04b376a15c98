"""Small fully-convolutional encoder-decoder with M replicated output heads."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from ..errors import ShapeMismatch


HEAD_GAIN = 0.1
HEAD_BIAS = 0.01


@dataclass(frozen=True)
class NetworkConfig:
    input_size: Tuple[int, int, int] = (256, 256, 3)
    num_heads: int = 5
    encoder_channels: Tuple[int, ...] = (16, 32, 64)
    decoder_channels: Tuple[int, ...] = (32, 16)
    # dilated 3x3 convolutions at the bottleneck, widening the receptive field
    context_dilations: Tuple[int, ...] = (2, 4)
    dropout_rate: float = 0.5
    batch_norm: bool = True
    # concatenate each encoder stage's output into the decoder stage of equal resolution
    skip_connections: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        object.__setattr__(self, "encoder_channels", tuple(int(v) for v in self.encoder_channels))
        object.__setattr__(self, "decoder_channels", tuple(int(v) for v in self.decoder_channels))
        object.__setattr__(self, "context_dilations", tuple(int(v) for v in self.context_dilations))
        if self.num_heads < 1:
            raise ValueError("num_heads must be at least 1")
        if len(self.decoder_channels) != len(self.encoder_channels) - 1:
            raise ValueError("need exactly one decoder stage fewer than encoder stages "
                             "so the output is half the input resolution")
        factor = 2 ** len(self.encoder_channels)
        h, w, _ = self.input_size
        if h % factor or w % factor:
            raise ValueError(f"input size must be divisible by {factor}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    @property
    def output_size(self):
        return (self.input_size[0] // 2, self.input_size[1] // 2)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def _init_conv(conv, generator, gain=1.0, bias=0.0):
    fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
    bound = gain * math.sqrt(6.0 / fan_in)
    with torch.no_grad():
        conv.weight.uniform_(-bound, bound, generator=generator)
        if conv.bias is not None:
            conv.bias.fill_(bias)


class GraspNet(nn.Module):
    """Strided-conv encoder, upsample+conv decoder, one 3x3 conv per hypothesis head."""

    def __init__(self, config: NetworkConfig, dtype=torch.float32):
        super().__init__()
        self.config = config
        channels = config.input_size[2]
        self.encoder = nn.ModuleList()
        for c in config.encoder_channels:
            self.encoder.append(self._block(channels, c, stride=2))
            channels = c
        self.context = nn.ModuleList(
            self._block(channels, channels, dilation=d) for d in config.context_dilations)
        self.dropout = nn.Dropout(config.dropout_rate)
        self.decoder = nn.ModuleList()
        skips = config.encoder_channels[-2::-1]
        for c, skip in zip(config.decoder_channels, skips):
            self.decoder.append(self._block(channels + (skip if config.skip_connections else 0), c))
            channels = c
        self.heads = nn.ModuleList(nn.Conv2d(channels, 1, 3, padding=1)
                                   for _ in range(config.num_heads))

        generator = torch.Generator().manual_seed(int(config.seed))
        for module in self.modules():
            if isinstance(module, nn.Conv2d) and module not in self.heads:
                _init_conv(module, generator)
        # heads start close to an all-zero map but on the live side of the clamp
        for head in self.heads:
            _init_conv(head, generator, gain=HEAD_GAIN, bias=HEAD_BIAS)
        # NHWC is about 20% faster for these small convolutions on CPU
        self.to(dtype=dtype, memory_format=torch.channels_last)

    def _block(self, c_in, c_out, stride=1, dilation=1):
        # a bias in front of batch norm would be cancelled by the mean subtraction
        conv = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=dilation, dilation=dilation,
                         bias=not self.config.batch_norm)
        if not self.config.batch_norm:
            return nn.Sequential(conv, nn.ReLU())
        return nn.Sequential(conv, nn.BatchNorm2d(c_out), nn.ReLU())

    def forward(self, x, clamp=True):
        """Hypothesis maps; ``clamp=False`` returns the pre-activation used for training."""
        x = (x - 0.5).contiguous(memory_format=torch.channels_last)
        features = []
        for block in self.encoder:
            x = block(x)
            features.append(x)
        for block in self.context:
            x = block(x) + x
        x = self.dropout(x)
        for block, skip in zip(self.decoder, features[-2::-1]):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            if self.config.skip_connections:
                x = torch.cat([x, skip], dim=1)
            x = block(x)
        out = torch.cat([head(x) for head in self.heads], dim=1)
        return F.relu(out) if clamp else out


def image_to_tensor(images, config, dtype=torch.float32):
    """(H, W, 3) or (B, H, W, 3) float images in [0, 1] -> (B, 3, H, W) tensor."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.shape[1:] != tuple(config.input_size):
        raise ShapeMismatch(f"image shape {arr.shape[1:]} does not match network input {config.input_size}")
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def forward(net, image, train=False):
    """Hypothesis maps ``(M, H/2, W/2)`` for one image (dropout only when ``train``)."""
    net.train(train)
    param = next(net.parameters())
    with torch.no_grad():
        out = net(image_to_tensor(image, net.config, param.dtype))
    return out[0].double().numpy()


def parameter_count(net):
    return sum(p.numel() for p in net.parameters())
