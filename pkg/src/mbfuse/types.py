"""Core value types shared across the fusion pipeline.

Images are stored as band-major matrices: a scene with L bands on an
H x W grid is an L x N matrix with N = H * W and pixels in raster-scan
(row-major) order.  All arrays are float64 and marked read-only after
construction, so instances can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

#: Default tolerance for abundance feasibility checks.
FEASIBILITY_TOL = 1e-9


def _as_readonly(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, order="C")
    out.setflags(write=False)
    return out


def _require_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite entries")


@dataclass(frozen=True)
class MultibandImage:
    """A multiband image: ``data[band, pixel]`` with raster-scan pixels."""

    bands: int
    height: int
    width: int
    data: np.ndarray                       # bands x (height * width)
    band_labels: Optional[Sequence[str]] = None

    def __post_init__(self):
        if self.bands < 1 or self.height < 1 or self.width < 1:
            raise ValueError("bands, height and width must be positive")
        data = _as_readonly(self.data)
        if data.shape != (self.bands, self.height * self.width):
            raise ValueError(
                f"data shape {data.shape} does not match "
                f"{self.bands} x {self.height * self.width}"
            )
        _require_finite(data, "image data")
        if self.band_labels is not None and len(self.band_labels) != self.bands:
            raise ValueError("band_labels length must equal band count")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_data(cls, data, height: int, width: int,
                  band_labels: Optional[Sequence[str]] = None) -> "MultibandImage":
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        return cls(data.shape[0], height, width, data, band_labels)

    @property
    def pixels(self) -> int:
        return self.height * self.width

    @property
    def grid(self) -> tuple[int, int]:
        return (self.height, self.width)

    def band(self, i: int) -> np.ndarray:
        """Band ``i`` reshaped to the 2-D grid."""
        return self.data[i].reshape(self.height, self.width)


@dataclass(frozen=True)
class SpectralResponse:
    """Spectral response matrix mapping L source bands to L_k sensor bands."""

    matrix: np.ndarray                     # L_k x L, nonnegative

    def __post_init__(self):
        m = _as_readonly(np.atleast_2d(self.matrix))
        _require_finite(m, "spectral response")
        if np.any(m < 0):
            raise ValueError("spectral response entries must be nonnegative")
        if np.any(~(m > 0).any(axis=1)):
            raise ValueError("every spectral response row needs a positive entry")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, bands: int) -> "SpectralResponse":
        return cls(np.eye(bands))

    @property
    def out_bands(self) -> int:
        return self.matrix.shape[0]

    @property
    def in_bands(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class BlurKernel:
    """Odd-sized 2-D convolution kernel, normalized to unit sum.

    The kernel is applied cyclically; its center element is the spatial
    lag (0, 0), so the delta kernel is the exact identity.
    """

    size: int
    coefficients: np.ndarray               # size x size

    def __post_init__(self):
        if self.size < 1 or self.size % 2 == 0:
            raise ValueError("kernel size must be odd and positive")
        c = _as_readonly(self.coefficients)
        if c.shape != (self.size, self.size):
            raise ValueError(f"coefficients must be {self.size} x {self.size}")
        _require_finite(c, "kernel coefficients")
        if abs(float(c.sum()) - 1.0) > 1e-12:
            raise ValueError("kernel coefficients must sum to 1 (within 1e-12)")
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def delta(cls) -> "BlurKernel":
        return cls(1, np.ones((1, 1)))

    def rotated(self) -> "BlurKernel":
        """The 180-degree rotation; applying it realizes the transposed blur."""
        return BlurKernel(self.size, self.coefficients[::-1, ::-1])


@dataclass(frozen=True)
class DownsamplePlan:
    """Uniform 2-D decimation keeping samples at ``offset + i * ratio``."""

    ratio: int
    offset_row: int = 0
    offset_col: int = 0

    def __post_init__(self):
        if self.ratio < 1:
            raise ValueError("downsampling ratio must be >= 1")
        if not (0 <= self.offset_row < self.ratio and 0 <= self.offset_col < self.ratio):
            raise ValueError("offsets must lie in [0, ratio)")

    def check_grid(self, height: int, width: int) -> None:
        if height % self.ratio or width % self.ratio:
            raise ValueError(
                f"grid {height} x {width} not divisible by ratio {self.ratio}"
            )

    def mask(self, height: int, width: int) -> np.ndarray:
        """Boolean raster-scan mask of retained pixels (length height*width)."""
        self.check_grid(height, width)
        m = np.zeros((height, width), dtype=bool)
        m[self.offset_row::self.ratio, self.offset_col::self.ratio] = True
        return m.ravel()


@dataclass(frozen=True)
class NoiseModel:
    """Per-band sensor noise plus optional mixture-model mismatch variance.

    ``xi`` is the scalar approximating the common diagonal of the
    blur/decimation Gram matrix; when None it is derived from the blur
    kernel at aggregation time.
    """

    sensor_var: np.ndarray                 # length L_k, strictly positive
    mixture_var: Optional[np.ndarray] = None   # length L, nonnegative; None = zero
    xi: Optional[float] = None

    def __post_init__(self):
        sv = _as_readonly(np.atleast_1d(self.sensor_var))
        _require_finite(sv, "sensor variances")
        if sv.ndim != 1 or np.any(sv <= 0):
            raise ValueError("sensor variances must be a strictly positive vector")
        object.__setattr__(self, "sensor_var", sv)
        if self.mixture_var is not None:
            mv = _as_readonly(np.atleast_1d(self.mixture_var))
            _require_finite(mv, "mixture variances")
            if mv.ndim != 1 or np.any(mv < 0):
                raise ValueError("mixture variances must be a nonnegative vector")
            object.__setattr__(self, "mixture_var", mv)
        if self.xi is not None and not (np.isfinite(self.xi) and self.xi > 0):
            raise ValueError("xi must be a positive finite scalar")


@dataclass(frozen=True)
class ObservationModel:
    """Bundle of the per-sensor degradation operators (response, blur,
    decimation) and noise description.

    Cross-field consistency (e.g. response rows vs sensor variance length)
    is reported by :func:`validate_problem` and enforced by the operations
    that consume the model, so that inconsistent models can still be built
    and diagnosed.
    """

    response: SpectralResponse
    blur: BlurKernel
    down: DownsamplePlan
    noise: NoiseModel

    def issues(self) -> list[str]:
        """Structural inconsistencies between the bundled components."""
        out = []
        if self.response.out_bands != self.noise.sensor_var.shape[0]:
            out.append(
                f"response rows ({self.response.out_bands}) != sensor variance "
                f"length ({self.noise.sensor_var.shape[0]})"
            )
        if (self.noise.mixture_var is not None
                and self.noise.mixture_var.shape[0] != self.response.in_bands):
            out.append(
                f"mixture variance length ({self.noise.mixture_var.shape[0]}) != "
                f"response columns ({self.response.in_bands})"
            )
        return out


@dataclass(frozen=True)
class EndmemberMatrix:
    """Endmember spectra as columns of an L x M matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _as_readonly(np.atleast_2d(self.matrix))
        if m.shape[1] < 1:
            raise ValueError("at least one endmember required")
        _require_finite(m, "endmember matrix")
        if np.any(m < 0):
            raise ValueError("endmember spectra must be nonnegative")
        for i in range(m.shape[1]):
            for j in range(i + 1, m.shape[1]):
                if np.array_equal(m[:, i], m[:, j]):
                    raise ValueError(f"endmember columns {i} and {j} are identical")
        object.__setattr__(self, "matrix", m)

    @property
    def bands(self) -> int:
        return self.matrix.shape[0]

    @property
    def count(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class AbundanceMap:
    """Per-pixel endmember abundances: ``data[endmember, pixel]``.

    Feasibility (nonnegativity and unit column sums) is a checkable
    property rather than a construction invariant, since intermediate
    estimates are allowed to violate it.
    """

    endmembers: int
    height: int
    width: int
    data: np.ndarray                       # endmembers x (height * width)

    def __post_init__(self):
        if self.endmembers < 1 or self.height < 1 or self.width < 1:
            raise ValueError("endmembers, height and width must be positive")
        data = _as_readonly(self.data)
        if data.shape != (self.endmembers, self.height * self.width):
            raise ValueError(
                f"data shape {data.shape} does not match "
                f"{self.endmembers} x {self.height * self.width}"
            )
        _require_finite(data, "abundance data")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_data(cls, data, height: int, width: int) -> "AbundanceMap":
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        return cls(data.shape[0], height, width, data)

    @property
    def pixels(self) -> int:
        return self.height * self.width

    @property
    def grid(self) -> tuple[int, int]:
        return (self.height, self.width)

    def band(self, i: int) -> np.ndarray:
        return self.data[i].reshape(self.height, self.width)

    def feasibility_violation(self) -> tuple[float, float]:
        """(largest negative excursion, largest |column sum - 1|)."""
        neg = float(max(0.0, -self.data.min()))
        colsum = float(np.abs(self.data.sum(axis=0) - 1.0).max())
        return neg, colsum

    def is_feasible(self, tol: float = FEASIBILITY_TOL) -> bool:
        neg, colsum = self.feasibility_violation()
        return neg <= tol and colsum <= tol


def mix(endmembers: EndmemberMatrix, abundances: AbundanceMap) -> MultibandImage:
    """Compose a multiband image from endmembers and abundances."""
    if endmembers.count != abundances.endmembers:
        raise ValueError(
            f"endmember count {endmembers.count} != abundance bands "
            f"{abundances.endmembers}"
        )
    data = endmembers.matrix @ abundances.data
    return MultibandImage(endmembers.bands, abundances.height,
                          abundances.width, data)


@dataclass(frozen=True)
class ImageSummary:
    """Shape facts for one observed image in a fusion problem."""
    index: int
    bands: int
    pixels: int
    ratio: int


@dataclass
class ProblemDiagnostics:
    """Outcome of :func:`validate_problem`: shape report plus findings."""

    images: list[ImageSummary] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    identifiable: bool = False

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_problem(models: Sequence[ObservationModel],
                     endmembers: EndmemberMatrix,
                     grid: tuple[int, int]) -> ProblemDiagnostics:
    """Check a fusion problem for dimensional consistency and identifiability.

    Never raises: inconsistencies are collected into the returned error
    list.  The identifiability verdict uses the sufficient condition that
    some image retains the full grid while offering at least as many bands
    as there are endmembers; a failed condition is reported as a warning
    (the problem may still be solvable with regularization).
    """
    diag = ProblemDiagnostics()
    if not models:
        diag.errors.append("no observation models supplied")
        return diag
    height, width = grid
    if height < 1 or width < 1:
        diag.errors.append(f"invalid grid {height} x {width}")
        return diag
    n = height * width
    m = endmembers.count

    for i, model in enumerate(models):
        d = model.down.ratio
        if height % d or width % d:
            diag.errors.append(
                f"image {i}: grid {height} x {width} not divisible by ratio {d}"
            )
            pixels = 0
        else:
            pixels = n // (d * d)
        diag.images.append(ImageSummary(i, model.response.out_bands, pixels, d))
        for issue in model.issues():
            diag.errors.append(f"image {i}: {issue}")
        if model.response.in_bands != endmembers.bands:
            diag.errors.append(
                f"image {i}: response columns ({model.response.in_bands}) != "
                f"endmember bands ({endmembers.bands})"
            )
        if model.blur.size > min(height, width):
            diag.errors.append(
                f"image {i}: blur kernel size {model.blur.size} exceeds grid"
            )

    diag.identifiable = any(
        s.ratio == 1 and s.bands >= m for s in diag.images
    )
    if not diag.identifiable:
        diag.warnings.append(
            "ML problem potentially ill-posed: no image has full spatial "
            f"resolution with at least {m} bands"
        )
    return diag
