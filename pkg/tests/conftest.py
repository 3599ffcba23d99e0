import sys
from pathlib import Path

# src layout without requiring an editable install; the compiled extension
# (built in place by `python setup.py build_ext --inplace`) lives next to
# the sources and is picked up the same way.
SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))
