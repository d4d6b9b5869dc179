"""UTC timestamp helpers; the engine stores times as integer epoch seconds."""
from datetime import datetime, timezone

from ioncast.errors import ArgumentError


def parse_time(value: str | int | float) -> int:
    """ISO-8601 (``Z`` or offset; naive means UTC) or epoch seconds -> epoch seconds."""
    if isinstance(value, (int, float)):
        return int(value)
    text = value.strip()
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ArgumentError(f"invalid ISO-8601 timestamp {value!r}") from exc
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return int(round(parsed.timestamp()))


def format_time(epoch: int | float) -> str:
    """Epoch seconds -> ``YYYY-MM-DDTHH:MM:SSZ``."""
    return datetime.fromtimestamp(float(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def year_of(epoch: int | float) -> int:
    return datetime.fromtimestamp(float(epoch), tz=timezone.utc).year
