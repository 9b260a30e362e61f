"""Root pytest configuration: importable package, isolated log directory, inline workers."""

import os
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# set before odediscover is imported so no test writes to ~/.odediscover
os.environ.setdefault("ODEDISCOVER_LOG_DIR", tempfile.mkdtemp(prefix="odediscover-logs-"))
os.environ.setdefault("ODEDISCOVER_THREADS", "1")
