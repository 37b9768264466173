import sys
from pathlib import Path

# Import the package from the source tree; the compiled module is found via
# RHYTHMKIT_MODULE_DIR (set by ctest) or a regular install.
_package_root = Path(__file__).resolve().parents[2] / "python"
if str(_package_root) not in sys.path:
    sys.path.insert(0, str(_package_root))
