"""Substructure representations and the pairwise costs between them.

A substructure is one diagonal Gaussian component of a fitted mixture.  A
domain is summarised by a :class:`SubstructureSet`: its components plus a
probability mass per component.  Two cost matrices are supported:

* ``center``   - squared Euclidean distance between component means;
* ``gaussian`` - squared Euclidean distance between the concatenated
  features ``(mean, sqrt(cov_diag))``, i.e. the squared 2-Wasserstein
  distance between the two diagonal Gaussians (the covariance part is the
  squared Hellinger distance between the diagonals).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
import numpy.typing as npt
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, NegativeVariance

FloatArray = npt.NDArray[np.float64]

MASS_TOL = 1e-9


@dataclass(frozen=True)
class GaussianComponent:
    """One substructure: a diagonal Gaussian with a mixing weight.

    ``class_label`` is set for source components (the label of the data the
    component was fitted on) and absent for target components.
    """

    mean: FloatArray
    cov_diag: FloatArray
    weight: float
    class_label: int | None = None

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov_diag, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov_diag", cov)
        if mean.ndim != 1 or cov.shape != mean.shape:
            raise DimensionMismatch(
                f"mean shape {mean.shape} vs cov_diag shape {cov.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("component parameters must be finite")
        if np.any(cov <= 0):
            raise NegativeVariance("cov_diag entries must be positive")
        if not 0 < self.weight <= 1 + MASS_TOL:
            raise ValueError(f"weight must be in (0, 1], got {self.weight}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class SubstructureSet:
    """Ordered components of one domain plus their probability masses."""

    components: tuple[GaussianComponent, ...]
    masses: FloatArray
    domain_tag: Literal["source", "target"]

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        masses = np.asarray(self.masses, dtype=np.float64)
        object.__setattr__(self, "masses", masses)
        if not self.components:
            raise ValueError("substructure set needs at least one component")
        if masses.shape != (len(self.components),):
            raise DimensionMismatch(
                f"{len(self.components)} components vs {masses.shape} masses"
            )
        if np.any(masses < 0) or abs(masses.sum() - 1.0) > MASS_TOL:
            raise ValueError("masses must be nonnegative and sum to 1")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise DimensionMismatch(f"mixed component dimensions: {dims}")

    @property
    def size(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def means(self) -> FloatArray:
        return np.stack([c.mean for c in self.components])

    def sqrt_covs(self) -> FloatArray:
        return np.sqrt(np.stack([c.cov_diag for c in self.components]))

    def gaussian_features(self) -> FloatArray:
        """Concatenated ``(mean, sqrt(cov_diag))`` rows, one per component."""
        return np.hstack([self.means(), self.sqrt_covs()])

    def class_labels(self) -> npt.NDArray[np.int64]:
        labels = [c.class_label for c in self.components]
        if any(lab is None for lab in labels):
            raise ValueError(f"{self.domain_tag} components carry no labels")
        return np.asarray(labels, dtype=np.int64)

    def with_masses(self, masses: FloatArray) -> "SubstructureSet":
        return replace(self, masses=np.asarray(masses, dtype=np.float64))

    def to_dict(self) -> dict:
        return {
            "domain_tag": self.domain_tag,
            "masses": self.masses.tolist(),
            "components": [
                {
                    "mean": c.mean.tolist(),
                    "cov_diag": c.cov_diag.tolist(),
                    "weight": c.weight,
                    "class_label": c.class_label,
                }
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SubstructureSet":
        comps = tuple(
            GaussianComponent(
                mean=np.asarray(c["mean"], dtype=np.float64),
                cov_diag=np.asarray(c["cov_diag"], dtype=np.float64),
                weight=float(c["weight"]),
                class_label=c.get("class_label"),
            )
            for c in doc["components"]
        )
        return cls(
            components=comps,
            masses=np.asarray(doc["masses"], dtype=np.float64),
            domain_tag=doc["domain_tag"],
        )


@dataclass(frozen=True)
class CostMatrix:
    """Nonnegative pairwise substructure costs, source rows x target columns."""

    values: FloatArray
    kind: Literal["center", "gaussian"]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise DimensionMismatch(f"cost matrix must be 2-D, got {values.ndim}-D")
        if not np.all(np.isfinite(values)):
            raise ValueError("cost matrix has non-finite entries")
        if np.any(values < 0):
            raise ValueError("cost matrix has negative entries")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def save_csv(self, path) -> None:
        k_t = self.values.shape[1]
        header = ",".join(f"t{j}" for j in range(k_t))
        np.savetxt(path, self.values, delimiter=",", header=header, comments="")


def _check_dims(source: SubstructureSet, target: SubstructureSet) -> None:
    if source.dim != target.dim:
        raise DimensionMismatch(
            f"source dimension {source.dim} vs target dimension {target.dim}"
        )


def cost_matrix_center(source: SubstructureSet, target: SubstructureSet) -> CostMatrix:
    """Squared Euclidean distances between component means."""
    _check_dims(source, target)
    values = cdist(source.means(), target.means(), "sqeuclidean")
    return CostMatrix(values=values, kind="center")


def bures_diag_sq(r_s: FloatArray, r_t: FloatArray) -> float:
    """Squared Hellinger distance between two diagonal covariances.

    Equals the squared Bures metric when both covariance matrices are
    diagonal: ``sum_f (sqrt(r_s[f]) - sqrt(r_t[f]))^2``.
    """
    r_s = np.asarray(r_s, dtype=np.float64)
    r_t = np.asarray(r_t, dtype=np.float64)
    if r_s.shape != r_t.shape:
        raise DimensionMismatch(f"{r_s.shape} vs {r_t.shape}")
    if np.any(r_s < 0) or np.any(r_t < 0):
        raise NegativeVariance("variances must be nonnegative")
    return float(np.sum((np.sqrt(r_s) - np.sqrt(r_t)) ** 2))


def cost_matrix_gaussian(source: SubstructureSet, target: SubstructureSet) -> CostMatrix:
    """Squared 2-Wasserstein distances between diagonal Gaussian components.

    Entry (i, j) is ``||z_s_i - z_t_j||^2 + ||sqrt(r_s_i) - sqrt(r_t_j)||^2``,
    computed as one squared Euclidean distance on the concatenated
    ``(mean, sqrt(cov))`` features.
    """
    _check_dims(source, target)
    values = cdist(
        source.gaussian_features(), target.gaussian_features(), "sqeuclidean"
    )
    return CostMatrix(values=values, kind="gaussian")
