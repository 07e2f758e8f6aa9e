"""Encoder-decoder translators with skip connections and a sigmoid head."""
import torch
import torch.nn.functional as F
from torch import nn
from torchvision.models import ResNet34_Weights, resnet34

from .domain import Backbone, TrainConfig

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class DecoderBlock(nn.Module):
    def __init__(self, in_channels, skip_channels, out_channels):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv2d(in_channels + skip_channels, out_channels, kernel_size=3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
        )

    def forward(self, x, skip=None):
        x = F.interpolate(x, scale_factor=2, mode='nearest')
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        return self.conv(x)


class ResNetUNet(nn.Module):
    """U-Net whose encoder is a ResNet-34 (optionally ImageNet pre-trained).

    Input: N x 3 x H x W in [0, 1] with H and W divisible by 32.
    Output: N x out_channels x H x W in [0, 1], channels squashed independently.
    """

    size_multiple = 32

    def __init__(self, out_channels: int, pretrained: bool = True):
        super().__init__()
        encoder = resnet34(weights=ResNet34_Weights.DEFAULT if pretrained else None)
        self.register_buffer('mean', torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer('std', torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))

        self.stem = nn.Sequential(encoder.conv1, encoder.bn1, encoder.relu)   # 64, /2
        self.pool = encoder.maxpool                                           # /4
        self.layer1 = encoder.layer1                                          # 64, /4
        self.layer2 = encoder.layer2                                          # 128, /8
        self.layer3 = encoder.layer3                                          # 256, /16
        self.layer4 = encoder.layer4                                          # 512, /32

        self.decode4 = DecoderBlock(512, 256, 256)
        self.decode3 = DecoderBlock(256, 128, 128)
        self.decode2 = DecoderBlock(128, 64, 64)
        self.decode1 = DecoderBlock(64, 64, 64)
        self.decode0 = DecoderBlock(64, 0, 32)
        self.head = nn.Conv2d(32, out_channels, kernel_size=3, padding=1)

    def forward(self, x):
        x = (x - self.mean) / self.std
        s1 = self.stem(x)
        s2 = self.layer1(self.pool(s1))
        s3 = self.layer2(s2)
        s4 = self.layer3(s3)
        bottom = self.layer4(s4)

        x = self.decode4(bottom, s4)
        x = self.decode3(x, s3)
        x = self.decode2(x, s2)
        x = self.decode1(x, s1)
        x = self.decode0(x)
        return torch.sigmoid(self.head(x))


class TinyUNet(nn.Module):
    """Two-level U-Net without normalization layers, smooth everywhere."""

    size_multiple = 2

    def __init__(self, out_channels: int, width: int = 8):
        super().__init__()
        self.enc1 = nn.Sequential(nn.Conv2d(3, width, 3, padding=1), nn.SiLU())
        self.enc2 = nn.Sequential(nn.AvgPool2d(2), nn.Conv2d(width, 2 * width, 3, padding=1), nn.SiLU())
        self.dec = nn.Sequential(nn.Conv2d(3 * width, width, 3, padding=1), nn.SiLU())
        self.head = nn.Conv2d(width, out_channels, 3, padding=1)

    def forward(self, x):
        e1 = self.enc1(x)
        e2 = F.interpolate(self.enc2(e1), scale_factor=2, mode='bilinear', align_corners=False)
        return torch.sigmoid(self.head(self.dec(torch.cat([e2, e1], dim=1))))


def build_model(out_channels: int, config: TrainConfig) -> nn.Module:
    if out_channels < 1:
        raise ValueError(f'out_channels must be positive, got {out_channels}')
    if config.backbone == Backbone.RESNET34:
        return ResNetUNet(out_channels, pretrained=config.pretrained)
    if config.backbone == Backbone.TINY:
        return TinyUNet(out_channels)
    raise ValueError(f'Unknown backbone {config.backbone!r}; choose from {list(Backbone.values)}')
