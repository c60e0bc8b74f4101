"""Autoregressive scene generator: encoders, decoder, heads, training and inference."""
from .config import ConfigError, ModelConfig, TrainConfig
from .encoding import Bounds, encode_scalar
from .network import Batch, Corruption, LossResult, SceneModel, corrupt
from .inference import (SampleResult, complete_scene, next_class_distribution, rearrange,
                        retrieve_asset, sample_class, sample_scene)
from .io import TrainedModel, load, save
from .train import EpochRecord, TrainingDiverged, TrainResult, evaluate_nll, train, write_learning_curve
