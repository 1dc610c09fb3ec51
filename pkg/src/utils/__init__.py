from .coloring import Colors, Coloring, error_line
from .environment import preprocessing_threads
from .logger import Logger
from .images import ImageFile
