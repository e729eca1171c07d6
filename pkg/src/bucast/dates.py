"""Month arithmetic on integer indexes.

A month is identified by ``year * 12 + month`` (January = 1), so
2014-01 maps to 24169. Consecutive months differ by exactly 1, which
keeps all window/lag logic free of calendar libraries.
"""

MONTH_NAMES = ("jan", "feb", "mar", "apr", "may", "jun",
               "jul", "aug", "sep", "oct", "nov", "dec")


def ym_to_index(year: int, month: int) -> int:
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range: {month}")
    return year * 12 + month


def index_to_ym(idx: int) -> tuple[int, int]:
    year, m = divmod(idx - 1, 12)
    return year, m + 1


def month_of(idx: int) -> int:
    """Calendar month (1..12) of a month index."""
    return (idx - 1) % 12 + 1


def parse_month(text: str) -> int:
    """Parse ``YYYY-MM`` into a month index."""
    parts = text.strip().split("-")
    if len(parts) != 2:
        raise ValueError(f"not a YYYY-MM date: {text!r}")
    return ym_to_index(int(parts[0]), int(parts[1]))


def format_month(idx: int) -> str:
    year, month = index_to_ym(idx)
    return f"{year:04d}-{month:02d}"
