from .base import *
from .basic import *
from .conv import *
from .recurrent import *
