import cv2
import numpy as np
from django.conf import settings
from django.utils.module_loading import import_string

from corpora.domain import Frame

from .domain import FlowField


class FlowEstimator:
    """Dense displacement between two consecutive frames of a clip."""

    def __init__(self, **options):
        pass

    def estimate(self, prev: Frame, curr: Frame) -> FlowField:
        raise NotImplementedError

    def __call__(self, prev: Frame, curr: Frame) -> FlowField:
        return self.estimate(prev, curr)


def _gray_u8(frame: Frame) -> np.ndarray:
    pixels = np.round(frame.pixels * 255.0).astype(np.uint8)
    if pixels.shape[2] == 1:
        return pixels[:, :, 0]
    return cv2.cvtColor(pixels, cv2.COLOR_RGB2GRAY)


class FarnebackEstimator(FlowEstimator):
    """Polynomial-expansion flow from OpenCV.

    OpenCV returns flow aligned to its first argument, so the backward flow
    (curr -> prev) is computed and negated to align the field to `curr`.
    """

    def __init__(self, params=None, **options):
        super().__init__(**options)
        self.params = list(params or settings.TRANSLAD_FARNEBACK_PARAMS)

    def estimate(self, prev: Frame, curr: Frame) -> FlowField:
        backward = cv2.calcOpticalFlowFarneback(_gray_u8(curr), _gray_u8(prev), None, *self.params)
        return FlowField(u=-backward[..., 0], v=-backward[..., 1])


def get_flow_estimator(name: str, **options) -> FlowEstimator:
    try:
        path = settings.TRANSLAD_FLOW_ESTIMATORS[name]
    except KeyError:
        raise ValueError(f'Unknown flow estimator {name!r}; choose from {sorted(settings.TRANSLAD_FLOW_ESTIMATORS)}')
    return import_string(path)(**options)


def dense_flow(prev: Frame | None, curr: Frame, estimator: FlowEstimator) -> FlowField:
    """Flow from `prev` to `curr`. A clip's first frame (prev is None) gets zero flow."""
    if prev is None:
        return FlowField.zeros(curr.height, curr.width)
    if prev.pixels.shape != curr.pixels.shape:
        raise ValueError(f'Frame shapes differ: {prev.pixels.shape} vs {curr.pixels.shape}')
    if prev.clip_id != curr.clip_id or curr.index != prev.index + 1:
        raise ValueError(
            f'Flow needs consecutive frames of one clip, got {prev.clip_id}/{prev.index} '
            f'and {curr.clip_id}/{curr.index}'
        )
    flow = estimator(prev, curr)
    if flow.shape != (curr.height, curr.width):
        raise ValueError(f'Estimator returned a {flow.shape} field for a {curr.height}x{curr.width} frame')
    return flow


def flow_magnitude(flow: FlowField) -> np.ndarray:
    """Per-pixel Euclidean norm; the direction is discarded."""
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    # float64 sum of squares is identical under sign flips and u/v swaps
    return np.sqrt(u * u + v * v).astype(np.float32)
