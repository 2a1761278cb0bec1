from .config import ExperimentConfig, load_config
from .manifest import ManifestError, RunManifest, run_stage
from .main import main

__all__ = ["ExperimentConfig", "ManifestError", "RunManifest", "load_config",
           "main", "run_stage"]
