from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .domain import Frame

FRAME_SUFFIXES = ('.png', '.jpg', '.jpeg', '.tif', '.tiff', '.bmp')
MIN_SIDE = 8


def load_pixels(path: Path) -> np.ndarray:
    """Decode an image file to an H x W x 3 float32 array in [0, 1].

    Grayscale images are replicated to three channels so a single translator
    input contract serves every corpus.
    """
    with Image.open(path) as image:
        if image.mode in ('L', 'I;16', 'I', 'F', '1'):
            gray = np.asarray(image.convert('L'), dtype=np.float32) / 255.0
            pixels = np.repeat(gray[:, :, None], 3, axis=2)
        else:
            pixels = np.asarray(image.convert('RGB'), dtype=np.float32) / 255.0
    return np.ascontiguousarray(pixels)


def resize_frame(frame: Frame, side: int) -> Frame:
    """Bilinear resize to side x side, keeping values in [0, 1]."""
    if side <= 0:
        raise ValueError(f'Resize side must be positive, got {side}')
    if side < MIN_SIDE:
        raise ValueError(f'Resize side must be at least {MIN_SIDE}, got {side}')
    if frame.height == side and frame.width == side:
        return frame

    pixels = cv2.resize(frame.pixels, (side, side), interpolation=cv2.INTER_LINEAR)
    if pixels.ndim == 2:
        # cv2 drops a trailing singleton channel
        pixels = pixels[:, :, None]
    pixels = np.clip(pixels, 0.0, 1.0).astype(np.float32)
    return frame.with_pixels(pixels)


def frame_paths(clip_dir: Path) -> list[Path]:
    return sorted(p for p in clip_dir.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)


def read_labels(path: Path) -> np.ndarray:
    values = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line not in ('0', '1'):
            raise ValueError(f'{path}: line {line_no} must be 0 or 1, got {line!r}')
        values.append(int(line))
    return np.asarray(values, dtype=np.int8)


def write_labels(path: Path, labels) -> None:
    path.write_text(''.join(f'{int(value)}\n' for value in labels))


def read_palette(path: Path) -> list[str]:
    names = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    if not names:
        raise ValueError(f'{path}: palette lists no classes')
    return names
