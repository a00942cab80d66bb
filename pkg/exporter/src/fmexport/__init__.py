"""Filter-map exporter: CNN max-pool activations to GGFM files."""

from .export import ExportJob, ExportResult, build_model, export, pool_activations
from .ggfm import filtermap_filename, write_filtermap, write_manifest

__version__ = "0.1.0"
