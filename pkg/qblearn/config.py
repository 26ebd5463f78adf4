import os
from dataclasses import dataclass

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

VERSION = "0.1.0"


@dataclass
class Config:
    """Configuration settings for the Qb-learning simulator"""

    # Parallel execution settings
    THREADS: int = int(os.getenv("QB_THREADS", "0"))  # 0 = available parallelism
    BACKEND: str = os.getenv("QB_BACKEND", "loky")  # joblib backend

    # Reproducibility
    DEFAULT_SEED: int = int(os.getenv("QB_SEED", "20240611"))

    # Paths
    OUTPUT_DIR: str = os.getenv("QB_OUTPUT_DIR", "./runs")
    PRESET_DIR: str = os.getenv(
        "QB_PRESET_DIR",
        os.path.join(os.path.dirname(os.path.abspath(__file__)), "preset_configs"),
    )

    LOG_LEVEL: str = os.getenv("QB_LOG_LEVEL", "INFO")

    # Display settings for console tables
    DISPLAY_DECIMALS: int = 2

    # Conditional-frequency histogram defaults
    HISTOGRAM_WIDTH: float = 0.005
    HISTOGRAM_BINS: int = 60  # bins k in {-n..n}
    HISTOGRAM_MIN_COUNT: int = 500

    # Nash detection tolerance, in pooled standard errors
    NASH_TOLERANCE_SE: float = 2.0

    # Size of the uniform draw blocks served by RngStream
    RNG_BLOCK: int = 4096

    VERSION: str = VERSION


config = Config()
