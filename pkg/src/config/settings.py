"""
Module for loading configuration from config.yaml and environment variables
"""
import os
import yaml
from pathlib import Path
from typing import Dict, Any
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Base paths
BASE_DIR = Path(__file__).parent.parent.parent
CONFIG_FILE = BASE_DIR / "config.yaml"


def load_config() -> Dict[str, Any]:
    """Load configuration from config.yaml"""
    import logging
    _logger = logging.getLogger(__name__)

    if not CONFIG_FILE.exists():
        _logger.warning(f"Config file {CONFIG_FILE} not found, using default values")
        return override_with_env(get_default_config())

    try:
        with open(CONFIG_FILE, 'r', encoding='utf-8') as f:
            config = yaml.safe_load(f) or {}

        # Override values from environment variables
        config = override_with_env(config)
        return config
    except Exception as e:
        _logger.error(f"Error loading configuration: {e}")
        return override_with_env(get_default_config())


# (env var, section, key, type)
ENV_OVERRIDES = [
    ("KDSM_DX", "level_set", "dx", float),
    ("KDSM_THICKEN", "level_set", "thickening", float),
    ("KDSM_LATTICE_H", "lattice", "h", float),
    ("KDSM_EPS", "point_location", "eps", float),
    ("KDSM_TAU", "embedding", "tau", float),
    ("KDSM_NUM_POSES", "dataset", "num_poses", int),
    ("KDSM_SEED", "dataset", "seed", int),
    ("KDSM_WORKERS", "dataset", "workers", int),
    ("KDSM_DATA_DIR", "paths", "data", str),
]


def override_with_env(config: Dict[str, Any]) -> Dict[str, Any]:
    """Override configuration values from environment variables"""
    for name, section, key, cast in ENV_OVERRIDES:
        raw = os.getenv(name)
        if not raw:
            continue
        try:
            config.setdefault(section, {})[key] = cast(raw)
        except ValueError:
            pass
    return config


def get_default_config() -> Dict[str, Any]:
    """Return default configuration"""
    return {
        "app": {
            "name": "KDSM Cloth Toolkit",
            "version": "1.0.0"
        },
        "level_set": {
            "dx": 2.0,
            "padding": 8.0,
            "thickening": 5.0
        },
        "lattice": {
            "h": 2.0,
            "refine_band": 0.0
        },
        "point_location": {
            "eps": 1e-4,
            "eps_box": 1e-3,
            "fallback_neighbors": 8
        },
        "embedding": {
            "tau": 1.0,
            "seed": 7,
            "clamp_distance": 5.0
        },
        "morph": {
            "solver": "auto",
            "tol": 1e-10,
            "direct_max_vertices": 5000
        },
        "model": {
            "image_size": 128,
            "lambda_reg": 1e-3
        },
        "dataset": {
            "num_poses": 500,
            "seed": 2024,
            "split": [0.8, 0.1, 0.1],
            "workers": 4
        },
        "mannequin": {
            "resolution": 24,
            "shirt_columns": 64,
            "shirt_rows": 30,
            "sleeve_rings": 14,
            "offset": 2.0
        },
        "paths": {
            "data": str(BASE_DIR / "data"),
            "artifacts": str(BASE_DIR / "data" / "artifacts"),
            "reports": str(BASE_DIR / "data" / "reports")
        }
    }


# Load configuration
_config = load_config()
_defaults = get_default_config()


def _section(name: str) -> Dict[str, Any]:
    merged = dict(_defaults[name])
    merged.update(_config.get(name) or {})
    return merged


# Application settings
APP_NAME = _section("app")["name"]
APP_VERSION = _section("app")["version"]

# Level set and lattice
LEVEL_SET_SETTINGS = _section("level_set")
LEVEL_SET_DX = float(LEVEL_SET_SETTINGS["dx"])
LEVEL_SET_PADDING = float(LEVEL_SET_SETTINGS["padding"])
THICKENING = float(LEVEL_SET_SETTINGS["thickening"])

LATTICE_SETTINGS = _section("lattice")
LATTICE_H = float(LATTICE_SETTINGS["h"])
REFINE_BAND = float(LATTICE_SETTINGS["refine_band"])

# Point location
POINT_LOCATION_SETTINGS = _section("point_location")
BARY_EPS = float(POINT_LOCATION_SETTINGS["eps"])
BOX_EPS = float(POINT_LOCATION_SETTINGS["eps_box"])
FALLBACK_NEIGHBORS = int(POINT_LOCATION_SETTINGS["fallback_neighbors"])

# Embedding and morph
EMBEDDING_SETTINGS = _section("embedding")
HYBRID_TAU = float(EMBEDDING_SETTINGS["tau"])
METHOD1_SEED = int(EMBEDDING_SETTINGS["seed"])
CLAMP_DISTANCE = float(EMBEDDING_SETTINGS["clamp_distance"])

MORPH_SETTINGS = _section("morph")
MORPH_SOLVER = MORPH_SETTINGS["solver"]
MORPH_TOL = float(MORPH_SETTINGS["tol"])
MORPH_DIRECT_MAX_VERTICES = int(MORPH_SETTINGS["direct_max_vertices"])

# Displacement model
MODEL_SETTINGS = _section("model")
IMAGE_SIZE = int(MODEL_SETTINGS["image_size"])
LAMBDA_REG = float(MODEL_SETTINGS["lambda_reg"])

# Dataset
DATASET_SETTINGS = _section("dataset")
NUM_POSES = int(DATASET_SETTINGS["num_poses"])
DATASET_SEED = int(DATASET_SETTINGS["seed"])
SPLIT = tuple(float(x) for x in DATASET_SETTINGS["split"])
WORKERS = int(DATASET_SETTINGS["workers"])

MANNEQUIN_SETTINGS = _section("mannequin")

# Path settings
PATH_SETTINGS = _section("paths")
DATA_DIR = Path(PATH_SETTINGS["data"])
ARTIFACTS_DIR = Path(PATH_SETTINGS["artifacts"])
REPORTS_DIR = Path(PATH_SETTINGS["reports"])

# Logging settings
LOGGING_CONFIG = {
    "level": os.getenv("LOG_LEVEL", "INFO"),
    "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    "datefmt": "%Y-%m-%d %H:%M:%S"
}

# API settings
API_HOST = os.getenv("API_HOST", "127.0.0.1")
API_PORT = int(os.getenv("API_PORT", "8000"))
API_RELOAD = os.getenv("API_RELOAD", "false").lower() == "true"
