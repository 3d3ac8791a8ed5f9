"""Convolutional autoencoder for 100x100 shape images and its file format.

Encoder: five 5x5 convolutions with 2x2 max pooling between them, taking
the map from 100 down to 50, 25, 13 and 7. Decoder: three rounds of 2x
up-sampling followed by an unpadded 5x5 convolution (7 -> 10 -> 16 -> 28),
a final 2x up-sampling, then fully connected layers of widths 500 and 10000
reshaped to the output image.
"""
from __future__ import annotations

import io
import os

import torch
from torch import nn

from .exceptions import InvalidInputError, VersionMismatchError

MODEL_FORMAT = "impurity-anomaly/shape-model"
MODEL_VERSION = 1
IMAGE_SIZE = 100


def architecture_descriptor(channel_width: int) -> dict:
    """Layer ladder with the padding choices needed to hit each map size."""
    c = channel_width
    return {
        "image_size": IMAGE_SIZE,
        "channel_width": c,
        "kernel": 5,
        "layers": [
            {"name": "conv1", "size": 100, "channels": c, "padding": 2},
            {"name": "pool1", "size": 50},
            {"name": "conv2", "size": 50, "channels": c, "padding": 2},
            {"name": "pool2", "size": 25},
            {"name": "conv3", "size": 25, "channels": c, "padding": 2},
            {"name": "pool3", "size": 13, "note": "ceil-mode pooling: 25 -> 13"},
            {"name": "conv4", "size": 13, "channels": c, "padding": 2},
            {"name": "pool4", "size": 7, "note": "ceil-mode pooling: 13 -> 7"},
            {"name": "conv5", "size": 7, "channels": c, "padding": 2},
            {"name": "up1", "size": 14},
            {"name": "conv6", "size": 10, "channels": c, "padding": 0,
             "note": "unpadded 5x5 after 2x up-sampling: 14 -> 10"},
            {"name": "up2", "size": 20},
            {"name": "conv7", "size": 16, "channels": c, "padding": 0,
             "note": "unpadded 5x5 after 2x up-sampling: 20 -> 16"},
            {"name": "up3", "size": 32},
            {"name": "conv8", "size": 28, "channels": c, "padding": 0,
             "note": "unpadded 5x5 after 2x up-sampling: 32 -> 28"},
            {"name": "up4", "size": 56, "note": "unlabeled stage; 2x like the other up-sampling steps"},
            {"name": "fc1", "units": 500},
            {"name": "fc2", "units": IMAGE_SIZE * IMAGE_SIZE, "note": "sigmoid, reshaped to 100x100"},
        ],
    }


def _conv(cin, cout, padding):
    return nn.Sequential(nn.Conv2d(cin, cout, kernel_size=5, padding=padding), nn.ReLU(inplace=True))


class ShapeAutoencoder(nn.Module):
    def __init__(self, channel_width: int = 16):
        super().__init__()
        c = channel_width
        self.channel_width = c
        self.encoder = nn.Sequential(
            _conv(1, c, 2), nn.MaxPool2d(2),
            _conv(c, c, 2), nn.MaxPool2d(2),
            _conv(c, c, 2), nn.MaxPool2d(2, ceil_mode=True),
            _conv(c, c, 2), nn.MaxPool2d(2, ceil_mode=True),
            _conv(c, c, 2),
        )
        self.decoder = nn.Sequential(
            nn.Upsample(scale_factor=2), _conv(c, c, 0),
            nn.Upsample(scale_factor=2), _conv(c, c, 0),
            nn.Upsample(scale_factor=2), _conv(c, c, 0),
            nn.Upsample(scale_factor=2),
            nn.Flatten(),
            nn.Linear(c * 56 * 56, 500), nn.ReLU(inplace=True),
            nn.Linear(500, IMAGE_SIZE * IMAGE_SIZE), nn.Sigmoid(),
        )

    def forward(self, x):
        # x: (n, 1, 100, 100) in [0, 1]
        out = self.decoder(self.encoder(x))
        return out.view(-1, 1, IMAGE_SIZE, IMAGE_SIZE)


def save_model(net: ShapeAutoencoder, path, extra: dict | None = None) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "descriptor": architecture_descriptor(net.channel_width),
        "extra": dict(extra or {}),
        "state_dict": net.state_dict(),
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_model(path) -> tuple[ShapeAutoencoder, dict]:
    """Returns the network (in eval mode) and the ``extra`` metadata dict."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise InvalidInputError(f"cannot read shape model {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise InvalidInputError(f"{path} is not a shape model file")
    if payload.get("version") != MODEL_VERSION:
        raise VersionMismatchError(
            f"{path}: shape model version {payload.get('version')}, expected {MODEL_VERSION}"
        )
    net = ShapeAutoencoder(int(payload["descriptor"]["channel_width"]))
    net.load_state_dict(payload["state_dict"])
    net.eval()
    return net, payload.get("extra", {})
