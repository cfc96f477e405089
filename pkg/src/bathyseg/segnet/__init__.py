from .model import ModelWeights, NetConfig, forward, init_model, loss_and_grad, tensor_spec
from .train import TrainConfig, train
from .weights import load_weights, save_weights

__all__ = [
    "ModelWeights",
    "NetConfig",
    "TrainConfig",
    "forward",
    "init_model",
    "load_weights",
    "loss_and_grad",
    "save_weights",
    "tensor_spec",
    "train",
]
