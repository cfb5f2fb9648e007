"""NIfTI-1 single-file reader/writer and the voxel grid type.

Only the subset needed for segmentation evaluation is handled: 3D images
stored as unsigned-8, signed-16 or float-32, optionally gzip-wrapped.
Arrays are kept in (x, y, z) index order; on disk the payload is x-fastest,
i.e. Fortran order for that shape.
"""
from __future__ import annotations

import gzip
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"

# NIfTI datatype code -> (tag, numpy dtype, bitpix)
DATATYPES = {
    2: ("uint8", np.dtype("u1"), 8),
    4: ("int16", np.dtype("i2"), 16),
    16: ("float32", np.dtype("f4"), 32),
}
TAG_TO_CODE = {tag: code for code, (tag, _, _) in DATATYPES.items()}

HEADER_DTYPE = np.dtype(
    [
        ("sizeof_hdr", "i4"),
        ("data_type", "S10"),
        ("db_name", "S18"),
        ("extents", "i4"),
        ("session_error", "i2"),
        ("regular", "S1"),
        ("dim_info", "u1"),
        ("dim", "i2", (8,)),
        ("intent_p1", "f4"),
        ("intent_p2", "f4"),
        ("intent_p3", "f4"),
        ("intent_code", "i2"),
        ("datatype", "i2"),
        ("bitpix", "i2"),
        ("slice_start", "i2"),
        ("pixdim", "f4", (8,)),
        ("vox_offset", "f4"),
        ("scl_slope", "f4"),
        ("scl_inter", "f4"),
        ("slice_end", "i2"),
        ("slice_code", "u1"),
        ("xyzt_units", "u1"),
        ("cal_max", "f4"),
        ("cal_min", "f4"),
        ("slice_duration", "f4"),
        ("toffset", "f4"),
        ("glmax", "i4"),
        ("glmin", "i4"),
        ("descrip", "S80"),
        ("aux_file", "S24"),
        ("qform_code", "i2"),
        ("sform_code", "i2"),
        ("quatern", "f4", (3,)),
        ("qoffset", "f4", (3,)),
        ("srow", "f4", (3, 4)),
        ("intent_name", "S16"),
        ("magic", "S4"),
    ]
)
assert HEADER_DTYPE.itemsize == HEADER_SIZE

ORIENTATION_FIELDS = ("qform_code", "sform_code", "quatern", "qoffset", "srow")
SPACING_RTOL = 1e-4


class NiftiFormatError(ValueError):
    """Raised when a file is not a supported NIfTI-1 image.

    ``field`` names the offending header field.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class GridMismatchError(ValueError):
    """Two grids that must share a lattice do not."""


@dataclass(frozen=True, eq=False)
class Orientation:
    """Orientation header fields, carried through unchanged."""

    qform_code: int = 0
    sform_code: int = 0
    quatern: tuple[float, float, float] = (0.0, 0.0, 0.0)
    qoffset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    srow: tuple[tuple[float, ...], ...] = (
        (0.0, 0.0, 0.0, 0.0),
        (0.0, 0.0, 0.0, 0.0),
        (0.0, 0.0, 0.0, 0.0),
    )

    def matches(self, other: Orientation, atol: float = 1e-3) -> bool:
        if (self.qform_code > 0) != (other.qform_code > 0):
            return False
        if (self.sform_code > 0) != (other.sform_code > 0):
            return False
        a = np.concatenate([self.quatern, self.qoffset, np.ravel(self.srow)])
        b = np.concatenate([other.quatern, other.qoffset, np.ravel(other.srow)])
        return bool(np.allclose(a, b, rtol=0, atol=atol))


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """3D lattice of scalars with physical voxel spacing in mm."""

    array: np.ndarray
    spacing: tuple[float, float, float]
    orientation: Orientation = field(default_factory=Orientation)

    def __post_init__(self):
        arr = np.asarray(self.array)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"grid must be 3D with positive dims, got shape {arr.shape}")
        if arr.dtype.name not in TAG_TO_CODE:
            raise ValueError(f"unsupported dtype {arr.dtype}; expected one of {sorted(TAG_TO_CODE)}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
            raise ValueError(f"spacing must be 3 positive reals, got {self.spacing}")
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.array.shape)

    @property
    def datatype(self) -> str:
        return self.array.dtype.name

    @property
    def data(self) -> np.ndarray:
        """Flat payload in x-fastest order."""
        return self.array.ravel(order="F")

    def with_array(self, array: np.ndarray) -> VoxelGrid:
        return VoxelGrid(array, self.spacing, self.orientation)

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.datatype == other.datatype
            and np.array_equal(np.float32(self.spacing), np.float32(other.spacing))
            and np.array_equal(self.array, other.array)
        )

    __hash__ = None


def mask_grid(mask: np.ndarray, like: VoxelGrid) -> VoxelGrid:
    """Wrap a boolean array as an unsigned-8 grid on ``like``'s lattice."""
    return VoxelGrid(np.asarray(mask, dtype=np.uint8), like.spacing, like.orientation)


def to_mask(grid: VoxelGrid) -> np.ndarray:
    """Binarize: any voxel above 0.5 is foreground."""
    return np.asarray(grid.array) > 0.5


def _decode_header(raw: bytes) -> np.ndarray:
    if len(raw) < HEADER_SIZE:
        raise NiftiFormatError("sizeof_hdr", f"file has {len(raw)} bytes, header needs {HEADER_SIZE}")
    for order in ("<", ">"):
        hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE.newbyteorder(order))[0]
        if int(hdr["sizeof_hdr"]) == HEADER_SIZE:
            return hdr
    raise NiftiFormatError("sizeof_hdr", f"expected {HEADER_SIZE}")


def decode_nifti(raw: bytes) -> VoxelGrid:
    """Decode a complete (possibly gzip-wrapped) NIfTI-1 byte string."""
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as exc:
            raise NiftiFormatError("gzip", str(exc)) from None

    hdr = _decode_header(raw)
    if raw[344:348] != MAGIC:
        raise NiftiFormatError("magic", f"expected {MAGIC!r}, got {raw[344:348]!r}")

    dim = [int(d) for d in hdr["dim"]]
    if dim[0] != 3:
        raise NiftiFormatError("dim", f"dim[0]={dim[0]}, only 3D images are supported")
    shape = tuple(dim[1:4])
    if min(shape) < 1:
        raise NiftiFormatError("dim", f"non-positive extent {shape}")

    code = int(hdr["datatype"])
    if code not in DATATYPES:
        raise NiftiFormatError("datatype", f"unsupported code {code}")
    _, dtype, bitpix = DATATYPES[code]
    if int(hdr["bitpix"]) != bitpix:
        raise NiftiFormatError("bitpix", f"{int(hdr['bitpix'])} does not match datatype {code}")

    pixdim = [float(p) for p in hdr["pixdim"][1:4]]
    if not all(np.isfinite(p) and p > 0 for p in pixdim):
        raise NiftiFormatError("pixdim", f"spacing must be positive, got {pixdim}")

    offset = float(hdr["vox_offset"])
    if not np.isfinite(offset) or offset < HEADER_SIZE or offset != int(offset):
        raise NiftiFormatError("vox_offset", f"invalid offset {offset}")
    offset = int(offset)

    dtype = dtype.newbyteorder(hdr.dtype["sizeof_hdr"].byteorder)
    count = shape[0] * shape[1] * shape[2]
    need = offset + count * dtype.itemsize
    if len(raw) < need:
        raise NiftiFormatError("vox_offset", f"payload truncated: need {need} bytes, have {len(raw)}")
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    array = flat.reshape(shape, order="F").astype(dtype.newbyteorder("="))

    slope, inter = float(hdr["scl_slope"]), float(hdr["scl_inter"])
    if np.isfinite(slope) and slope != 0 and (slope != 1 or (np.isfinite(inter) and inter != 0)):
        inter = inter if np.isfinite(inter) else 0.0
        array = (array.astype(np.float64) * slope + inter).astype(np.float32)

    orientation = Orientation(
        qform_code=int(hdr["qform_code"]),
        sform_code=int(hdr["sform_code"]),
        quatern=tuple(float(v) for v in hdr["quatern"]),
        qoffset=tuple(float(v) for v in hdr["qoffset"]),
        srow=tuple(tuple(float(v) for v in row) for row in hdr["srow"]),
    )
    return VoxelGrid(np.ascontiguousarray(array), tuple(pixdim), orientation)


def encode_nifti(grid: VoxelGrid) -> bytes:
    """Serialize ``grid`` to an uncompressed little-endian NIfTI-1 byte string."""
    code = TAG_TO_CODE[grid.datatype]
    _, dtype, bitpix = DATATYPES[code]
    hdr = np.zeros((), dtype=HEADER_DTYPE.newbyteorder("<"))
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    hdr["dim"] = [3, *grid.dims, 1, 1, 1, 1]
    hdr["datatype"] = code
    hdr["bitpix"] = bitpix
    hdr["pixdim"] = [1.0, *grid.spacing, 0.0, 0.0, 0.0, 0.0]
    hdr["vox_offset"] = VOX_OFFSET
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # mm
    o = grid.orientation
    hdr["qform_code"] = o.qform_code
    hdr["sform_code"] = o.sform_code
    hdr["quatern"] = o.quatern
    hdr["qoffset"] = o.qoffset
    hdr["srow"] = o.srow
    hdr["magic"] = MAGIC
    payload = np.asarray(grid.array, dtype=dtype.newbyteorder("<")).tobytes(order="F")
    return hdr.tobytes() + b"\x00" * (VOX_OFFSET - HEADER_SIZE) + payload


def read_nifti(path: str | Path) -> VoxelGrid:
    return decode_nifti(Path(path).read_bytes())


def write_nifti(grid: VoxelGrid, path: str | Path, compresslevel: int = 6) -> None:
    """Write ``grid``; gzip-wrapped unless the name ends in plain ``.nii``.

    The gzip mtime is pinned to 0 so identical grids give identical bytes.
    """
    path = Path(path)
    raw = encode_nifti(grid)
    if path.suffix != ".nii":
        raw = gzip.compress(raw, compresslevel=compresslevel, mtime=0)
    path.write_bytes(raw)


def check_compatible(a: VoxelGrid, b: VoxelGrid, rtol: float = SPACING_RTOL) -> None:
    """Raise GridMismatchError unless dims match and spacing agrees within ``rtol``."""
    if a.dims != b.dims:
        raise GridMismatchError(f"dimension mismatch: {a.dims} vs {b.dims}")
    for sa, sb in zip(a.spacing, b.spacing):
        if abs(sa - sb) > rtol * max(abs(sa), abs(sb)):
            raise GridMismatchError(f"spacing mismatch: {a.spacing} vs {b.spacing}")


def check_orientation(a: VoxelGrid, b: VoxelGrid) -> None:
    """Reject pairs whose stored orientations disagree; nothing is resampled."""
    if not a.orientation.matches(b.orientation):
        raise GridMismatchError("orientation mismatch: images are not on the same physical lattice")
