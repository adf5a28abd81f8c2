from .config import ExperimentConfig, MethodSpec
