import numpy as np

from .domain import SegOracleResult


def make_seg_target(result: SegOracleResult, palette_size: int) -> np.ndarray:
    """One-hot H x W x palette_size map; channel 0 is background."""
    class_map = result.class_map
    if class_map.size and (class_map.min() < 0 or class_map.max() >= palette_size):
        raise ValueError(
            f'Class index {int(class_map.max())} out of range for a palette of {palette_size} channels'
        )
    return np.eye(palette_size, dtype=np.float32)[class_map]


def decode_seg_target(seg_target: np.ndarray) -> np.ndarray:
    return np.argmax(seg_target, axis=-1).astype(np.int32)


def mask_flow(magnitude: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero the magnitude wherever the foreground mask is 0."""
    if magnitude.shape != mask.shape:
        raise ValueError(f'Magnitude {magnitude.shape} and mask {mask.shape} differ in shape')
    return np.where(mask != 0, magnitude, 0).astype(np.float32)


def scale_flow_target(flow_target: np.ndarray, cap: float) -> np.ndarray:
    """min(magnitude, cap) / cap, in [0, 1]."""
    if cap <= 0:
        raise ValueError(f'Flow cap must be positive, got {cap}')
    return (np.minimum(flow_target, cap) / cap).astype(np.float32)


def compute_flow_cap(foreground_magnitudes, percentile: float = 99.5, headroom: float = 1.0) -> float:
    """Percentile of on-mask training magnitudes times `headroom`; 1.0 when there is no motion."""
    values = [np.asarray(chunk, dtype=np.float64).ravel() for chunk in foreground_magnitudes]
    values = np.concatenate(values) if values else np.empty(0)
    values = values[values > 0]
    if not values.size:
        return 1.0
    cap = float(np.percentile(values, percentile)) * headroom
    return cap if cap > 0 else 1.0
