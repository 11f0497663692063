"""The synthesis measurement model ``b = A D^+ s + n`` shared by every solver."""
from __future__ import annotations

from functools import cached_property
from typing import Optional

import numpy as np

from .errors import InvalidDimensionError
from .linops import (
    BandedOperator,
    ShiftStrategy,
    estimate_shift,
    mean_adjust,
)

__all__ = ["SynthesisModel"]


class SynthesisModel:
    """Dictionary ``Phi = A D^+`` plus the rule for recovering the lost mean.

    Parameters
    ----------
    op : BandedOperator
        TV analysis operator ``D``.
    shift : ShiftStrategy
        How the constant removed by ``D^+ D`` is put back.
    forward : ndarray of shape (J, N), optional
        Forward model ``A``; ``None`` means the identity (denoising).
    offset : {"project", "noise"}
        How fits treat the constant missing from ``D^+ s``. ``"project"``
        removes the direction ``A @ ones`` from data and dictionary, which
        makes the constant a free nuisance parameter and leaves ``J - 1``
        measurement dimensions. ``"noise"`` uses the data as given, so
        whatever the constant contributes is absorbed by the noise term.
    """

    OFFSETS = ("project", "noise")

    def __init__(self, op: BandedOperator, shift: ShiftStrategy, forward: Optional[np.ndarray] = None,
                 offset: str = "noise"):
        if offset not in self.OFFSETS:
            raise ValueError(f"offset must be one of {self.OFFSETS}, got {offset!r}")
        self.op = op
        self.shift = shift
        self.offset = offset
        if forward is not None:
            forward = np.asarray(forward, dtype=float)
            if forward.ndim != 2 or forward.shape[1] != op.cols:
                raise InvalidDimensionError(
                    f"forward model must have {op.cols} columns, got shape {forward.shape}")
        self.forward = forward

    @property
    def is_identity(self) -> bool:
        return self.forward is None

    @property
    def synthesis(self):
        return self.op.synthesis

    @cached_property
    def dictionary(self) -> np.ndarray:
        V = self.op.synthesis.matrix
        return V if self.forward is None else self.forward @ V

    @property
    def dims(self) -> tuple[int, int, int]:
        """``(J, N, M)``: measurements, signal length, dictionary columns."""
        J = self.op.cols if self.forward is None else self.forward.shape[0]
        return (J, self.op.cols, self.op.rows)

    def apply_forward(self, x):
        return np.asarray(x, dtype=float) if self.forward is None else self.forward @ x

    @cached_property
    def offset_direction(self) -> np.ndarray:
        """``A @ ones``: how a constant signal shows up in the data."""
        return self.apply_forward(np.ones(self.op.cols))

    @cached_property
    def _unit_offset(self) -> Optional[np.ndarray]:
        d = self.offset_direction
        nd = float(np.linalg.norm(d))
        return None if nd == 0 else d / nd

    def project(self, v) -> np.ndarray:
        """Remove the component along ``A @ ones`` (columns of a matrix separately).

        The unknown constant only ever enters the data along that direction,
        so solvers fit the projected data and the constant is restored
        afterwards by the shift strategy.
        """
        v = np.asarray(v, dtype=float)
        u = self._unit_offset
        if u is None or self.offset == "noise":
            return v
        return v - np.multiply.outer(u, u @ v)

    def centered(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        J = self.dims[0]
        if b.shape != (J,):
            raise InvalidDimensionError(f"data must have shape ({J},), got {b.shape}")
        return self.project(b)

    @cached_property
    def fit_dictionary(self) -> np.ndarray:
        """Dictionary with the offset direction projected out. For ``A = I``
        the columns of ``D^+`` are already mean-free, so this is ``D^+``."""
        if self.forward is None or self.offset == "noise":
            return self.dictionary
        return self.project(self.dictionary)

    @property
    def data_dof(self) -> int:
        """Measurement dimensions left after projecting out the offset."""
        if self.offset == "noise" or self._unit_offset is None:
            return self.dims[0]
        return self.dims[0] - 1

    def restore(self, coefficients) -> tuple[np.ndarray, float]:
        """Synthesize ``D^+ s`` and add the shift; returns ``(x, shift)``."""
        v = self.op.synthesis.matrix @ np.asarray(coefficients, dtype=float)
        shift = estimate_shift(v, self.shift)
        return mean_adjust(v, shift), shift

    def with_shift(self, shift: ShiftStrategy) -> "SynthesisModel":
        m = SynthesisModel(self.op, shift, self.forward, self.offset)
        for key in ("dictionary", "fit_dictionary", "offset_direction", "_unit_offset"):
            if key in self.__dict__:
                m.__dict__[key] = self.__dict__[key]
        return m
