from .classification import *
