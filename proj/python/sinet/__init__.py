"""Python bindings for the SINet CPU segmentation library."""

from sinet._sinet import (
    Model,
    SinetError,
    avg_pool2d,
    bench_dilated,
    bilinear_upsample,
    boundary_band,
    boundary_f1,
    boundary_weighted_ce,
    build,
    build_from_table,
    channel_shuffle,
    conv2d,
    expand_face_box,
    global_avg_pool,
    load_weights,
    make_toy_dataset,
    miou,
    morph_dilate,
    morph_erode,
    softmax_channels,
    summarize,
)

__all__ = [
    "Model",
    "SinetError",
    "avg_pool2d",
    "bench_dilated",
    "bilinear_upsample",
    "boundary_band",
    "boundary_f1",
    "boundary_weighted_ce",
    "build",
    "build_from_table",
    "channel_shuffle",
    "conv2d",
    "expand_face_box",
    "global_avg_pool",
    "load_weights",
    "make_toy_dataset",
    "miou",
    "morph_dilate",
    "morph_erode",
    "softmax_channels",
    "summarize",
]

__version__ = "0.1.0"
