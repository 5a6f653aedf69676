"""Collects acceptance outcomes so the session summary can print them."""
from collections import OrderedDict

RESULTS: "OrderedDict[str, list[tuple[str, bool, str]]]" = OrderedDict()
TITLES: dict[str, str] = {}


def record(criterion: str, title: str, part: str, ok: bool, detail: str) -> None:
    TITLES.setdefault(criterion, title)
    RESULTS.setdefault(criterion, []).append((part, bool(ok), detail))
