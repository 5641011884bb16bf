from typing import Optional

from treelab.errors import CapExceededError, ConfigError


# RANGE CHECKS (raise instead of returning False):
def check_cap(name: str, value: int, cap: int):
    """Desk-scale ceilings: anything above has to go through a sampling path."""
    if value > cap:
        raise CapExceededError(f"{name}={value} exceeds the cap of {cap}")


def check_positive(name: str, value: int, minimum: int = 1):
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")


def check_open_unit(name: str, value: float):
    if not (0.0 < value < 1.0):
        raise ConfigError(f"{name} must lie in (0, 1), got {value}")


def check_noise_rate(value: float):
    if not (0.0 <= value < 0.5):
        raise ConfigError(f"noise rate must lie in [0, 1/2), got {value}")


def check_choice(name: str, value: Optional[str], choices):
    if value not in choices:
        raise ConfigError(f"{name} must be one of {sorted(choices)}, got {value!r}")
