from .base import *

DEBUG = False

# quieter stage logging for batch runs
LOGGING["loggers"]["apps"]["level"] = config("ODFLOW_LOG_LEVEL", default="WARNING")
