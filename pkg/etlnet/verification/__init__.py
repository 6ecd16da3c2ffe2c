from .gradcheck import *
from .suite import *
