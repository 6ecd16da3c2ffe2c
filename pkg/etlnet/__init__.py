from .errors import *
from .numcore import Precision, Rng
from .models import ModelConfig, VariantName, Model, build_model, save_checkpoint, load_checkpoint
from .dataset import SampleRecord, WindowSet, SynthConfig, DataConfig, SplitSpec, make_windows
from .train import TrainConfig, train, evaluate
from .metrics import MetricsReport, compute_metrics
from .experiments import run_sweep, run_ablation, run_comparison, aggregate_by, emit_report
from .config import RunConfig

__version__ = "0.1.0"
