from .common import Callback
from .history import CSVHistoryCallback, EarlyStopping, MLFlowHistoryLogger
