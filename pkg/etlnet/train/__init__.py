from .config import TrainConfig
from .loss import bce_loss
from .optimizer import AdamState, adam_step
from .trainer import EpochRecord, TrainHistory, Trainer, train, evaluate, predict_proba
from .pipeline import split_traces, fit_traces, restrict_split
