"""Score curves and anomaly-map images for visual inspection."""
import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

APPEARANCE_COLOR = 'red'
MOTION_COLOR = 'blue'
LABEL_COLOR = 'pink'


def label_intervals(labels) -> list[tuple[int, int]]:
    """[start, end) frame ranges where the label is 1."""
    labels = np.asarray(labels, dtype=int)
    edges = np.diff(np.concatenate([[0], labels, [0]]))
    return list(zip(np.flatnonzero(edges == 1).tolist(), np.flatnonzero(edges == -1).tolist()))


def plot_clip(frame_index, appearance, motion, labels, path, title=''):
    """Both branch curves over one clip with anomalous intervals shaded."""
    fig, ax = plt.subplots(figsize=(10, 3))
    try:
        if labels is not None:
            for start, end in label_intervals(labels):
                ax.axvspan(start - 0.5, end - 0.5, color=LABEL_COLOR, alpha=0.6, lw=0)
        ax.plot(frame_index, appearance, color=APPEARANCE_COLOR, label='appearance')
        ax.plot(frame_index, motion, color=MOTION_COLOR, label='motion')
        ax.set_xlabel('frame')
        ax.set_ylabel('normalized score')
        ax.set_title(title)
        ax.legend(loc='upper right')
        fig.tight_layout()
        fig.savefig(path, dpi=100)
    finally:
        plt.close(fig)
    return path


def save_map(values: np.ndarray, path, vmax=None):
    plt.imsave(path, values, cmap='jet', vmin=0.0, vmax=vmax)
    return path
