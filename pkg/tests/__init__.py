import os


# Library code logs heavily at debug level; keep the captured output readable.
os.environ.setdefault("LOGURU_LEVEL", "INFO")
