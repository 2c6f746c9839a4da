"""Class-id conventions shared across the pipeline.

Two pixel-classification tasks exist. The detection task separates berry
skin from everything else; the segmentation task separates wax bloom from
wax-free skin and from pixels that belong to neither (background, stalk,
lignified spots). Ground-truth scenes carry a third labelling that the
extraction step maps onto either task.
"""

# Detection task (berry localization).
DET_BACKGROUND = 0
DET_BERRY = 1
DETECTION_CLASS_NAMES = ("background", "berry")

# Segmentation task (wax quantification). OUTSIDE marks pixels beyond the
# analysed region and never enters accuracy or proportion computations.
SEG_WAX = 0
SEG_NOWAX = 1
SEG_OTHER = 2
SEG_OUTSIDE = 3
SEGMENTATION_CLASS_NAMES = ("wax", "nowax", "other")

# Ground-truth scene labels emitted by the simulator.
SCENE_BACKGROUND = 0
SCENE_NOWAX = 1
SCENE_WAX = 2
SCENE_PEDICLE = 3

TASK_DETECTION = "detection"
TASK_SEGMENTATION = "segmentation"

# Rectangle label names, grouped by the task they belong to.
TASK_CLASSES = {
    TASK_DETECTION: DETECTION_CLASS_NAMES,
    TASK_SEGMENTATION: SEGMENTATION_CLASS_NAMES,
}


def scene_to_detection(scene_labels):
    """Map simulator ground-truth labels onto detection-task ids."""
    return ((scene_labels == SCENE_NOWAX) | (scene_labels == SCENE_WAX)).astype("uint8")


def scene_to_segmentation(scene_labels):
    """Map simulator ground-truth labels onto segmentation-task ids."""
    import numpy as np

    out = np.full(scene_labels.shape, SEG_OTHER, dtype="uint8")
    out[scene_labels == SCENE_WAX] = SEG_WAX
    out[scene_labels == SCENE_NOWAX] = SEG_NOWAX
    return out
