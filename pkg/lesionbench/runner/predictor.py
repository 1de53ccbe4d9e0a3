"""
Whole-case prediction, routed by the batch sampler a model was trained with:

- two_dim: one forward pass per axial slice, restacked along depth
- three_dim: a single forward pass over the volume
- patch samplers: tile_for_inference, forward per patch, reassemble

The class-probability volume is turned into labels by channel argmax; ties
go to the lowest class index.
"""

from typing import Optional

import numpy as np

from lesionbench.data_model import CaseRecord, LabelVolume
from lesionbench.models import SegmentationNetwork, forward
from lesionbench.runner.checkpoint import LoadedModel
from lesionbench.sampling import PatchSpec, reassemble, samplers, tile_for_inference

DEFAULT_INFERENCE_BATCH = 4


def _forward_chunks(model: SegmentationNetwork, inputs: np.ndarray, batch_size: int) -> np.ndarray:
    outputs = [
        forward(model, np.ascontiguousarray(inputs[start:start + batch_size], dtype=np.float32))
        for start in range(0, len(inputs), batch_size)
    ]
    return np.concatenate(outputs, axis=0)


def predict_probabilities(model: SegmentationNetwork, case: CaseRecord, sampler_key: str,
                          patch_spec: Optional[PatchSpec] = None,
                          batch_size: int = DEFAULT_INFERENCE_BATCH) -> np.ndarray:
    """Class probabilities (num_classes, D, H, W) for a whole case."""
    info = samplers.info(sampler_key)
    image = case.image.data

    if info.key == "two_dim":
        slices = image.transpose(1, 0, 2, 3)
        probs = _forward_chunks(model, slices, batch_size)
        return probs.transpose(1, 0, 2, 3)

    if not info.patched:
        return forward(model, np.ascontiguousarray(image, dtype=np.float32))

    tiles = tile_for_inference(case, patch_spec or PatchSpec())
    probs = _forward_chunks(model, tiles.patches, batch_size)
    return reassemble(probs, tiles.origins, tiles.source_shape)


def probabilities_to_labels(probs: np.ndarray, num_classes: Optional[int] = None) -> LabelVolume:
    # np.argmax returns the first maximum, i.e. the lowest class on ties
    labels = np.argmax(probs, axis=0).astype(np.uint8)
    return LabelVolume(labels, num_classes=num_classes or probs.shape[0])


def predict_case(loaded: LoadedModel, case: CaseRecord, batch_size: int = DEFAULT_INFERENCE_BATCH) -> LabelVolume:
    """Predicted label volume of a case with a restored model."""
    sampler = loaded.experiment.sampler
    probs = predict_probabilities(loaded.model, case, sampler.key, sampler.to_patch_spec(), batch_size)
    return probabilities_to_labels(probs, loaded.model.config.num_classes)
