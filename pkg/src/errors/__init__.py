from .pipeline_exceptions import *
