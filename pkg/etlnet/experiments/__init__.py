from .sweep import *
from .report import *
