from .layers import AvgPool, ConvST, DenseBlock, GlobalAvgPool, Linear, ReLU
from .models import Sequential, build_cnn, build_mlp, load_model, parameter_count, save_model
from .training import Adam, ArrayDataset, TrainConfig, train_model

__all__ = [
    "AvgPool",
    "ConvST",
    "DenseBlock",
    "GlobalAvgPool",
    "Linear",
    "ReLU",
    "Sequential",
    "build_cnn",
    "build_mlp",
    "load_model",
    "parameter_count",
    "save_model",
    "Adam",
    "ArrayDataset",
    "TrainConfig",
    "train_model",
]
