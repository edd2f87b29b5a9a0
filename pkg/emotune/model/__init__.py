from .config import *
from .transformer import *
from .training import *
from .sampling import *
from .checkpoint import *
from .gradcheck import *
from .classifier import *
