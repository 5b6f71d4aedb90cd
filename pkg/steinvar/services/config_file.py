import os

from steinvar.constants import SEED_ENV_VAR


class ConfigFileError(ValueError):
    pass


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key=value`` lines; ``#`` starts a comment, keys are normalized to ``snake_case``."""
    values: dict[str, str] = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lstrip("-").replace("-", "_")
        if not sep or not key:
            raise ConfigFileError(f"{source}:{number}: expected key=value, got '{raw_line.strip()}'.")
        values[key] = value.strip()
    return values


def load_config_file(path: str) -> dict[str, str]:
    with open(path, encoding="utf-8") as handle:
        return parse_config_text(handle.read(), path)


def seed_from_env() -> int | None:
    raw = os.getenv(SEED_ENV_VAR)
    if raw is None or not raw.strip():
        return None
    try:
        seed = int(raw.strip(), 0)
    except ValueError as exc:
        raise ConfigFileError(f"{SEED_ENV_VAR} must be an integer, got '{raw}'.") from exc
    if seed < 0:
        raise ConfigFileError(f"{SEED_ENV_VAR} must be non-negative, got {seed}.")
    return seed
