"""Seafloor-anomaly segmentation pipeline for multibeam bathymetry rasters.

The package is organized as a small numpy/scipy library:

  grid_io      raster parsing/serialization (.bgrd, EsriAscii, XYZ, GeoTIFF
               subset) and grayscale preview rendering
  preprocess   fixed-extent chunking, per-chunk normalization, hillshade
  inpaint      isophote-guided hole filling for survey gaps
  synthgen     ship extraction, depth-consistent compositing, fractal
               terrain, dataset builds
  segnet       compact encoder-decoder network: init/forward/backprop,
               Adam training loop, portable .swnn weights
  detect       whole-layer inference (CNN chunk pipeline, bounded-memory
               merging) and the ProbabilityMap type
  depression   priority-flood inverse-sinkhole baseline
  postprocess  thresholding, connected components, GeoJSON vectorization
  metrics      pooled segmentation metrics, per-wreck IoU, runtime per MB
  cli          bathyseg command-line entry point
  service      local HTTP facade for the browser UI
"""

from .depression import DepressionParams, infer_depression
from .detect import MergePlan, ProbabilityMap, infer_cnn, merge_chunks
from .grid_io import GeoGrid, RasterFormat, read_grid, render_grayscale, write_grid
from .inpaint import InpaintConfig, inpaint
from .metrics import ConfusionCounts, confusion, report, runtime_per_mb, wreck_count_pct
from .postprocess import detections_from_probability, extract_components, threshold, to_geojson
from .preprocess import Chunk, ChunkerConfig, chunk_grid, hillshade, normalize_chunk
from .segnet import (
    ModelWeights,
    NetConfig,
    TrainConfig,
    forward,
    init_model,
    load_weights,
    loss_and_grad,
    save_weights,
    train,
)
from .synthgen import (
    DatasetManifest,
    ShipPatch,
    SynthConfig,
    build_dataset,
    composite,
    extract_ship,
    generate_terrain,
    synthetic_ship,
)

__version__ = "0.1.0"

__all__ = [
    "Chunk",
    "ChunkerConfig",
    "ConfusionCounts",
    "DatasetManifest",
    "DepressionParams",
    "GeoGrid",
    "InpaintConfig",
    "MergePlan",
    "ModelWeights",
    "NetConfig",
    "ProbabilityMap",
    "RasterFormat",
    "ShipPatch",
    "SynthConfig",
    "TrainConfig",
    "build_dataset",
    "chunk_grid",
    "composite",
    "confusion",
    "detections_from_probability",
    "extract_components",
    "extract_ship",
    "forward",
    "generate_terrain",
    "hillshade",
    "infer_cnn",
    "infer_depression",
    "init_model",
    "inpaint",
    "load_weights",
    "loss_and_grad",
    "merge_chunks",
    "normalize_chunk",
    "read_grid",
    "render_grayscale",
    "report",
    "runtime_per_mb",
    "save_weights",
    "synthetic_ship",
    "threshold",
    "to_geojson",
    "train",
    "wreck_count_pct",
    "write_grid",
    "__version__",
]
