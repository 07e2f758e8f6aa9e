import logging
import threading

import numpy as np
import torch
from django.conf import settings
from django.utils.module_loading import import_string

from corpora.domain import Frame

from .domain import SegOracleResult

logger = logging.getLogger(__name__)


class OracleMiss(Exception):
    """The oracle produced nothing usable for a frame."""


class SegmentationOracle:
    """Produces a class map over the corpus palette for a frame.

    Subclasses implement `predict`; `palette` lists the foreground classes in
    target-channel order (channel 0 is background).
    """

    def __init__(self, palette, **options):
        self.palette = tuple(palette)

    def predict(self, frame: Frame) -> SegOracleResult:
        raise NotImplementedError

    def __call__(self, frame: Frame) -> SegOracleResult:
        return self.predict(frame)


def get_segmentation_oracle(name: str, palette, **options) -> SegmentationOracle:
    try:
        path = settings.TRANSLAD_SEGMENTATION_ORACLES[name]
    except KeyError:
        raise ValueError(
            f'Unknown segmentation oracle {name!r}; choose from {sorted(settings.TRANSLAD_SEGMENTATION_ORACLES)}'
        )
    return import_string(path)(palette=palette, **options)


def segment(frame: Frame, oracle: SegmentationOracle) -> SegOracleResult:
    """Run the oracle on one frame; a failed frame becomes an empty, missed result."""
    try:
        result = oracle(frame)
    except OracleMiss as exc:
        logger.warning(f'Oracle miss on {frame.split}/{frame.clip_id}/{frame.index}: {exc}')
        return SegOracleResult.empty(frame.height, frame.width, missed=True)
    if result.class_map.shape != (frame.height, frame.width):
        raise ValueError(
            f'Oracle returned a {result.class_map.shape} map for a {frame.height}x{frame.width} frame'
        )
    return result


class MaskRCNNOracle(SegmentationOracle):
    """COCO Mask R-CNN from torchvision, restricted to the palette classes.

    Detections are painted in ascending score order so the most confident
    instance owns overlapping pixels.
    """

    def __init__(self, palette, score_threshold=0.5, mask_threshold=0.5, device=None, **options):
        super().__init__(palette)
        self.score_threshold = score_threshold
        self.mask_threshold = mask_threshold
        self.device = torch.device(device or settings.TRANSLAD_DEVICE)
        self._model = None
        self._lock = threading.Lock()

        from torchvision.models.detection import MaskRCNN_ResNet50_FPN_Weights
        self._weights = MaskRCNN_ResNet50_FPN_Weights.DEFAULT
        categories = self._weights.meta['categories']
        unknown = [name for name in self.palette if name not in categories]
        if unknown:
            raise ValueError(f'Palette classes not known to the COCO segmenter: {unknown}')
        # COCO category id -> palette channel
        self._channels = {categories.index(name): i + 1 for i, name in enumerate(self.palette)}

    def _load(self):
        from torchvision.models.detection import maskrcnn_resnet50_fpn
        model = maskrcnn_resnet50_fpn(weights=self._weights)
        model.eval().to(self.device)
        return model

    def predict(self, frame: Frame) -> SegOracleResult:
        with self._lock:
            if self._model is None:
                self._model = self._load()
            image = torch.from_numpy(frame.pixels).permute(2, 0, 1).to(self.device)
            try:
                with torch.no_grad():
                    output = self._model([image])[0]
            except RuntimeError as exc:
                raise OracleMiss(str(exc)) from exc

        class_map = np.zeros((frame.height, frame.width), dtype=np.int32)
        scores = output['scores'].cpu().numpy()
        labels = output['labels'].cpu().numpy()
        masks = output['masks'].cpu().numpy()[:, 0]
        for i in np.argsort(scores, kind='stable'):
            channel = self._channels.get(int(labels[i]))
            if channel is None or scores[i] < self.score_threshold:
                continue
            class_map[masks[i] > self.mask_threshold] = channel
        return SegOracleResult.from_class_map(class_map)
