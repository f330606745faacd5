"""The three clip classes and their serialized names."""

from __future__ import annotations

from enum import Enum

from .errors import FormatError


class StSClass(str, Enum):
    SitToStand = "Sit-to-Stand"
    StandToSit = "Stand-to-Sit"
    Other = "Other"

    @property
    def index(self) -> int:
        return CLASS_ORDER.index(self)

    @property
    def sign(self) -> float:
        """Sign applied to dy_top/dt: + for rising, - for sitting down."""
        if self is StSClass.SitToStand:
            return 1.0
        if self is StSClass.StandToSit:
            return -1.0
        raise ValueError("Other has no vertical direction")

    @classmethod
    def parse(cls, text: str) -> "StSClass":
        text = text.strip()
        for c in cls:
            if text in (c.value, c.name):
                return c
        raise FormatError(f"unknown class label {text!r}; expected one of {[c.value for c in cls]}")


# fixed order used for probabilities, confusion matrices and tie-breaking
CLASS_ORDER = (StSClass.SitToStand, StSClass.StandToSit, StSClass.Other)
