# Training Module
from .enhancer import Enhancer, enhance
from .trainer import (
    ExperimentState,
    TrainConfig,
    TrainResult,
    model_rows,
    read_loss_csv,
    train,
    train_step,
    write_loss_csv,
)
