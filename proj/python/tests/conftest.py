import os
import sys

build = os.environ.get("FREEENT_BUILD_DIR")
if build:
    sys.path.insert(0, os.path.join(build, "python"))
