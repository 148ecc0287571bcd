import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

# deterministic, CI-friendly hypothesis defaults
settings.register_profile(
    "default",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

sys.path.insert(0, str(Path(__file__).parent))
