import cv2
import numpy as np
from scipy.signal import savgol_filter

from targets.domain import Branch

from .domain import AnomalyMap, BranchCalibration, BranchStats, FusionResult, ScoreSeries, ScoreStage


def anomaly_map(output: np.ndarray, target: np.ndarray, branch: str) -> AnomalyMap:
    """Squared difference, averaged over channels when there are several."""
    output = np.asarray(output, dtype=np.float32)
    target = np.asarray(target, dtype=np.float32)
    if output.ndim == 3 and target.ndim == 2 and output.shape[2] == 1:
        output = output[:, :, 0]
    if output.shape != target.shape:
        raise ValueError(f'{branch} output {output.shape} and target {target.shape} differ in shape')
    diff = (output - target) ** 2
    values = diff.mean(axis=2) if diff.ndim == 3 else diff
    return AnomalyMap(values=values.astype(np.float32), branch=str(branch))


def refine(amap: AnomalyMap, kernel_size: int = 3, iterations: int = 1) -> AnomalyMap:
    """Grayscale opening: erosion then dilation with a square kernel, edges replicated."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f'Refinement kernel must be odd and positive, got {kernel_size}')
    if iterations < 1:
        raise ValueError(f'Refinement iterations must be positive, got {iterations}')
    kernel = cv2.getStructuringElement(cv2.MORPH_RECT, (kernel_size, kernel_size))
    values = cv2.morphologyEx(
        amap.values.astype(np.float32),
        cv2.MORPH_OPEN,
        kernel,
        iterations=iterations,
        borderType=cv2.BORDER_REPLICATE,
    )
    return AnomalyMap(values=values, branch=amap.branch, refined=True)


def frame_score(amap: AnomalyMap) -> float:
    return float(np.mean(amap.values, dtype=np.float64))


def effective_window(length: int, window: int) -> int:
    if window <= length:
        return window
    return length if length % 2 else length - 1


def smooth_scores(series: ScoreSeries, window: int = 41, polyorder: int = 1) -> ScoreSeries:
    """Savitzky-Golay smoothing within one clip.

    Edge frames take the value of a polynomial fitted to the first or last
    full window, so polynomials up to `polyorder` pass through unchanged.
    Clips shorter than the window use the largest odd window that fits.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f'Smoothing window must be odd and positive, got {window}')
    if polyorder < 0 or polyorder >= window:
        raise ValueError(f'polyorder must lie in [0, window), got {polyorder} for window {window}')
    scores = np.asarray(series.scores, dtype=np.float64)
    fitted = effective_window(len(scores), window)
    if fitted <= polyorder:
        return series.with_scores(scores.copy(), ScoreStage.SMOOTHED)
    return series.with_scores(savgol_filter(scores, fitted, polyorder, mode='interp'), ScoreStage.SMOOTHED)


def calibrate(branch_scores: dict) -> BranchCalibration:
    """Mean and population std of each branch's concatenated training scores."""
    stats = {}
    for branch, series_list in branch_scores.items():
        values = np.concatenate([np.asarray(s.scores, dtype=np.float64) for s in series_list])
        stats[str(branch)] = BranchStats(mean=float(values.mean()), std=float(values.std()))
    return BranchCalibration(stats)


def normalize(series: ScoreSeries, stats: BranchStats, branch: str) -> np.ndarray:
    if not stats.std > 0:
        raise ValueError(f'Calibration of the {branch} branch has zero variance; cannot normalize its scores')
    return (np.asarray(series.scores, dtype=np.float64) - stats.mean) / stats.std


def fuse(appearance: ScoreSeries, motion: ScoreSeries, calib: BranchCalibration, thresholds=None) -> FusionResult:
    """Per-frame max of the branch z-scores, plus per-branch threshold flags on the input scores."""
    if len(appearance) != len(motion):
        raise ValueError(
            f'Clip {appearance.clip_id}: {len(appearance)} appearance scores but {len(motion)} motion scores'
        )
    app_z = normalize(appearance, calib.for_branch(Branch.APPEARANCE), Branch.APPEARANCE)
    mot_z = normalize(motion, calib.for_branch(Branch.MOTION), Branch.MOTION)
    result = FusionResult(fused=appearance.with_scores(np.maximum(app_z, mot_z), ScoreStage.FUSED))
    if thresholds is not None:
        if thresholds.appearance is not None:
            result.appearance_flags = appearance.scores > thresholds.appearance
        if thresholds.motion is not None:
            result.motion_flags = motion.scores > thresholds.motion
    return result
