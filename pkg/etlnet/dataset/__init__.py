from .records import *
from .normalizer import *
from .windowing import *
from .splitter import SplitMode, SplitSpec, DatasetSplitter, split
from .synthetic import *
from .config import DataSource, DataConfig, resolve_records, parse_car_map
