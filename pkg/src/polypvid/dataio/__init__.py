from polypvid.dataio.augment import AugmentPolicy, augment_window
from polypvid.dataio.dataset import Dataset, Sample, Video, load_dataset, save_dataset
from polypvid.dataio.preprocess import PreprocessConfig, crop_canvas, preprocess
from polypvid.dataio.synthetic import SyntheticSceneConfig, generate_synthetic
from polypvid.dataio.windows import split_train_val, window_indices, window_sampler

__all__ = [
    "AugmentPolicy",
    "Dataset",
    "PreprocessConfig",
    "Sample",
    "SyntheticSceneConfig",
    "Video",
    "augment_window",
    "crop_canvas",
    "generate_synthetic",
    "load_dataset",
    "preprocess",
    "save_dataset",
    "split_train_val",
    "window_indices",
    "window_sampler",
]
