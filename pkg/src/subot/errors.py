"""Exception types shared across the package.

Every error raised by the library derives from :class:`SubotError` so the
CLI can catch one base class and report the concrete error name.
"""

from __future__ import annotations


class SubotError(Exception):
    """Base class for all library errors."""


# ---------------------------------------------------------------- datamodel

class MissingFile(SubotError):
    def __init__(self, path: str):
        super().__init__(f"file not found: {path}")
        self.path = path


class RaggedRows(SubotError):
    def __init__(self, line: int, expected: int, got: int):
        super().__init__(
            f"line {line}: expected {expected} columns, got {got}"
        )
        self.line = line


class NonNumericCell(SubotError):
    def __init__(self, line: int, col: int, text: str):
        super().__init__(f"line {line}, column {col}: not numeric: {text!r}")
        self.line = line
        self.col = col


class NonFiniteValue(SubotError):
    def __init__(self, line: int, col: int):
        super().__init__(f"line {line}, column {col}: non-finite value")
        self.line = line
        self.col = col


class WindowTooShort(SubotError):
    def __init__(self, length: int):
        super().__init__(f"window has {length} sample(s), need at least 2")
        self.length = length


class DegenerateSplit(SubotError):
    pass


# ---------------------------------------------------------------------- gmm

class KExceedsN(SubotError):
    def __init__(self, k: int, n: int):
        super().__init__(f"cannot fit {k} components to {n} row(s)")
        self.k = k
        self.n = n


class ClassTooSmall(SubotError):
    def __init__(self, class_id: int, n_class: int, k_min: int):
        super().__init__(
            f"class {class_id} has {n_class} row(s), fewer than the "
            f"minimum component count {k_min}"
        )
        self.class_id = class_id
        self.n_class = n_class


# ------------------------------------------------------------- substructure

class DimensionMismatch(SubotError):
    pass


class NegativeVariance(SubotError):
    pass


# ----------------------------------------------------------------------- ot

class NumericalUnderflow(SubotError):
    pass


class ZeroMassRow(SubotError):
    def __init__(self, row: int):
        super().__init__(
            f"transport plan row {row} carries zero mass and no cost matrix "
            f"was supplied for the nearest-target fallback"
        )
        self.row = row


# ----------------------------------------------------------------- pipeline

class EmptyTrainingSet(SubotError):
    pass


class LengthMismatch(SubotError):
    def __init__(self, n_predicted: int, n_truth: int):
        super().__init__(
            f"{n_predicted} prediction(s) vs {n_truth} truth label(s)"
        )
