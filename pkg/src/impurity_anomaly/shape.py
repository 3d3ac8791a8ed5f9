"""Shape anomaly: circle difference, blank-label autoencoder scoring and
post-processing of reconstructions."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
import torch
from scipy import ndimage
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_images
from .autoencoder import IMAGE_SIZE, ShapeAutoencoder, load_model, save_model
from .exceptions import InvalidInputError, TrainingError
from .geometry import EnclosingCircle, Impurity, smallest_enclosing_circle
from .scores import ScoreSet, min_max_normalize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShapeTrainConfig:
    normal_threshold: float = 0.3
    anomalous_threshold: float = 0.55
    image_size: int = IMAGE_SIZE
    blank_labels: bool = True
    epochs: int = 12
    learning_rate: float = 3e-4
    batch_size: int = 32
    rng_seed: int = 0
    channel_width: int = 16

    def __post_init__(self):
        if not 0 <= self.normal_threshold < self.anomalous_threshold <= 1:
            raise InvalidInputError(
                "thresholds must satisfy 0 <= normal_threshold < anomalous_threshold <= 1"
            )
        if self.image_size != IMAGE_SIZE:
            raise InvalidInputError(f"the network is built for {IMAGE_SIZE}x{IMAGE_SIZE} images")
        if self.epochs < 1 or self.batch_size < 1 or self.channel_width < 1:
            raise InvalidInputError("epochs, batch_size and channel_width must be positive")


@dataclass(frozen=True)
class PostprocessParams:
    binarize_threshold: float = 0.5
    kernel_size: int = 3
    erode_iterations: int = 1
    dilate_iterations: int = 1

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise InvalidInputError(f"kernel size must be odd, got {self.kernel_size}")


# -- circle difference -------------------------------------------------------

def circle_diff_score(imp: Impurity,
                      objective: Callable[[list], EnclosingCircle] = smallest_enclosing_circle) -> float:
    """Relative area missing from the impurity compared with its smallest
    enclosing circle, clamped to [0, 1].

    The circle is fitted to the contour pixel centres, so rasterized disks
    score close to 0.
    """
    circle = objective(imp.contour)
    if circle.area <= 0.0:
        return 0.0
    return min(1.0, max(0.0, (circle.area - imp.area) / circle.area))


def circle_diff_scores(scan) -> np.ndarray:
    return np.array([circle_diff_score(imp) for imp in scan.impurities])


def select_training_sets(scores, cfg: ShapeTrainConfig = ShapeTrainConfig()):
    """Split ids into (normal, anomalous): normal scores are strictly below
    ``normal_threshold``, anomalous ones at or above ``anomalous_threshold``.
    The band in between is not used for training."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise InvalidInputError("no circle-difference scores given")
    normal = np.flatnonzero(s < cfg.normal_threshold)
    anomalous = np.flatnonzero(s >= cfg.anomalous_threshold)
    if normal.size == 0:
        raise TrainingError(f"no impurity scores below {cfg.normal_threshold}; nothing to train on")
    if anomalous.size == 0 and cfg.blank_labels:
        raise TrainingError(
            f"blank-label training needs impurities scoring >= {cfg.anomalous_threshold}"
        )
    return normal, anomalous


# -- post-processing ---------------------------------------------------------

def postprocess(image, p: PostprocessParams = PostprocessParams()) -> np.ndarray:
    """Binarize at the threshold (inclusive), erode, then dilate."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidInputError(f"postprocess expects a 2-D image, got shape {img.shape}")
    binary = img >= p.binarize_threshold
    kernel = np.ones((p.kernel_size, p.kernel_size), dtype=bool)
    if p.erode_iterations:
        binary = ndimage.binary_erosion(binary, kernel, iterations=p.erode_iterations)
    if p.dilate_iterations:
        binary = ndimage.binary_dilation(binary, kernel, iterations=p.dilate_iterations)
    return binary.astype(np.uint8)


# -- model -------------------------------------------------------------------

class ShapeModel:
    """A trained autoencoder plus the configuration it was trained with."""

    def __init__(self, net: ShapeAutoencoder, config: Optional[ShapeTrainConfig] = None,
                 history: Optional[list] = None):
        self.net = net.eval()
        self.config = config
        self.history = list(history or [])

    def reconstruct(self, images) -> np.ndarray:
        x = check_images(images, IMAGE_SIZE)
        out = []
        with torch.no_grad():
            for start in range(0, len(x), 64):
                batch = torch.from_numpy(x[start:start + 64]).unsqueeze(1)
                out.append(self.net(batch).squeeze(1).numpy())
        return np.concatenate(out) if out else np.empty((0, IMAGE_SIZE, IMAGE_SIZE), np.float32)

    def save(self, path) -> None:
        extra = {"config": asdict(self.config)} if self.config else {}
        extra["history"] = [float(v) for v in self.history]
        save_model(self.net, path, extra)

    @classmethod
    def load(cls, path) -> "ShapeModel":
        net, extra = load_model(path)
        cfg = ShapeTrainConfig(**extra["config"]) if "config" in extra else None
        return cls(net, cfg, extra.get("history"))


def reconstruct(model: ShapeModel, image) -> np.ndarray:
    img = np.asarray(image)
    if img.shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise InvalidInputError(f"expected a {IMAGE_SIZE}x{IMAGE_SIZE} image, got {img.shape}")
    return model.reconstruct(img[None])[0]


def _fit_network(X: np.ndarray, targets: np.ndarray, cfg: ShapeTrainConfig) -> tuple[ShapeAutoencoder, list]:
    torch.manual_seed(cfg.rng_seed)
    gen = torch.Generator().manual_seed(cfg.rng_seed)
    net = ShapeAutoencoder(cfg.channel_width)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    loss_fn = torch.nn.MSELoss()
    xs = torch.from_numpy(X).unsqueeze(1)
    ys = torch.from_numpy(targets).unsqueeze(1)
    history = []
    with _deterministic():
        net.train()
        for epoch in range(cfg.epochs):
            order = torch.randperm(len(xs), generator=gen)
            total = 0.0
            for start in range(0, len(xs), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                opt.zero_grad()
                loss = loss_fn(net(xs[idx]), ys[idx])
                if not torch.isfinite(loss):
                    raise TrainingError(f"training diverged at epoch {epoch + 1}")
                loss.backward()
                opt.step()
                total += loss.item() * len(idx)
            history.append(total / len(xs))
            log.info("epoch %d/%d loss %.5f", epoch + 1, cfg.epochs, history[-1])
    net.eval()
    return net, history


class _deterministic:
    def __enter__(self):
        self._prev = torch.are_deterministic_algorithms_enabled()
        torch.use_deterministic_algorithms(True)

    def __exit__(self, *exc):
        torch.use_deterministic_algorithms(self._prev)


def train_shape_model(normal, anomalous, cfg: ShapeTrainConfig = ShapeTrainConfig()) -> ShapeModel:
    """Train on normal images labelled with themselves and, when
    ``cfg.blank_labels`` is set, anomalous images labelled with a blank
    (all-zero) image."""
    normal = check_images(normal, cfg.image_size)
    anomalous = check_images(anomalous, cfg.image_size) if anomalous is not None and len(anomalous) else \
        np.empty((0, cfg.image_size, cfg.image_size), np.float32)
    if len(normal) == 0:
        raise TrainingError("no normal images to train on")
    if cfg.blank_labels and len(anomalous) == 0:
        raise TrainingError("blank-label training needs anomalous images")
    if cfg.blank_labels:
        X = np.concatenate([normal, anomalous])
        targets = np.concatenate([normal, np.zeros_like(anomalous)])
    else:
        X, targets = normal, normal
    net, history = _fit_network(np.ascontiguousarray(X), np.ascontiguousarray(targets), cfg)
    return ShapeModel(net, cfg, history)


# -- scoring -----------------------------------------------------------------

def reconstruction_errors(model: ShapeModel, images, p: PostprocessParams = PostprocessParams(),
                          intensity_scale: float = 255.0) -> np.ndarray:
    """MSE between each binary input and its post-processed reconstruction,
    on a 0..``intensity_scale`` intensity range."""
    x = check_images(images, IMAGE_SIZE)
    recon = model.reconstruct(x)
    errs = np.empty(len(x))
    for n in range(len(x)):
        diff = (x[n].astype(np.float64) - postprocess(recon[n], p)) * intensity_scale
        errs[n] = np.mean(diff * diff)
    return errs


def shape_scores(scan, model: ShapeModel, p: PostprocessParams = PostprocessParams(),
                 intensity_scale: float = 255.0) -> ScoreSet:
    missing = [imp.id for imp in scan.impurities if imp.shape_image is None]
    if missing:
        raise InvalidInputError(f"scan {scan.scan_id}: impurities {missing[:5]} have no shape image")
    if not scan.impurities:
        return ScoreSet(scan.scan_id, shape=np.empty(0), raw={"shape": np.empty(0)})
    images = np.stack([imp.shape_image for imp in scan.impurities])
    raw = reconstruction_errors(model, images, p, intensity_scale)
    return ScoreSet(scan.scan_id, shape=min_max_normalize(raw), raw={"shape": raw})


class ShapeAnomalyDetector(BaseEstimator):
    """Autoencoder shape scorer with the estimator interface.

    ``fit(X, y)`` takes normalized shape images and labels (1 = anomalous).
    With ``blank_labels`` the anomalous images are trained towards a blank
    image; without it they are ignored. ``score_samples`` returns raw
    reconstruction errors, higher meaning more anomalous.
    """

    def __init__(self, blank_labels=True, channel_width=16, epochs=12, learning_rate=3e-4,
                 batch_size=32, random_state=0, binarize_threshold=0.5, kernel_size=3,
                 erode_iterations=1, dilate_iterations=1, intensity_scale=255.0):
        self.blank_labels = blank_labels
        self.channel_width = channel_width
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.random_state = random_state
        self.binarize_threshold = binarize_threshold
        self.kernel_size = kernel_size
        self.erode_iterations = erode_iterations
        self.dilate_iterations = dilate_iterations
        self.intensity_scale = intensity_scale

    def _train_config(self) -> ShapeTrainConfig:
        return ShapeTrainConfig(
            blank_labels=self.blank_labels, epochs=self.epochs, learning_rate=self.learning_rate,
            batch_size=self.batch_size, rng_seed=self.random_state, channel_width=self.channel_width,
        )

    def _postprocess_params(self) -> PostprocessParams:
        return PostprocessParams(self.binarize_threshold, self.kernel_size,
                                 self.erode_iterations, self.dilate_iterations)

    def fit(self, X, y=None):
        X = check_images(X, IMAGE_SIZE)
        y = np.zeros(len(X), dtype=int) if y is None else np.asarray(y).astype(int).reshape(-1)
        if len(y) != len(X):
            raise InvalidInputError(f"{len(X)} images but {len(y)} labels")
        self.model_ = train_shape_model(X[y == 0], X[y == 1], self._train_config())
        return self

    def score_samples(self, X):
        check_is_fitted(self, "model_")
        return reconstruction_errors(self.model_, X, self._postprocess_params(), self.intensity_scale)

    def transform(self, X):
        """Min-max normalized scores of the given batch, shape ``(n, 1)``."""
        return min_max_normalize(self.score_samples(X))[:, None]

