import sys
from pathlib import Path

# allow importing the test-local oracle helpers
sys.path.insert(0, str(Path(__file__).parent))
