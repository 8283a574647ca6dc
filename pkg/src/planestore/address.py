"""Logical space bloating and request translation.

The device exposes one logical region per ladder format, each sized as if
the whole model were stored at that format (L * N_i bits). Every region is
backed by the same physical plane image; a read's region selects the
format, its offset selects the weight range, and translation fans the
range out into burst-granular requests on just the needed planes.

The traditional baseline layout stores weights contiguously at full
precision, one 64-byte-aligned extent per chunk in directory order.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

from .bitplane import ChunkDirectory, PlaneLayout
from .quant import FpFormat, GuardConfig, NO_GUARD, plane_set

BLOCK = 64  # bytes; cacheline transaction granularity on both sides
BLOCK_BITS = BLOCK * 8

FP16_BYTES = 2  # traditional layout stores every weight full-precision


@dataclass(frozen=True)
class Region:
    fmt: FpFormat
    base_bit: int
    size_bits: int

    @property
    def end_bit(self) -> int:
        return self.base_bit + self.size_bits


@dataclass(frozen=True)
class RegionTable:
    num_weights: int
    regions: tuple[Region, ...]

    @property
    def total_logical_bits(self) -> int:
        return sum(r.size_bits for r in self.regions)


@dataclass(frozen=True)
class LogicalRead:
    addr_bit: int
    len_bits: int

    def __post_init__(self) -> None:
        if self.addr_bit < 0 or self.len_bits < 0:
            raise ValueError("negative logical read")


@dataclass(frozen=True)
class PhysicalRequest:
    """One burst-aligned read the DRAM back end will serve."""

    byte_addr: int
    len_bytes: int
    plane_index: int = -1  # -1 for weight-contiguous (no plane provenance)
    purpose: str = "weight_fetch"

    def __post_init__(self) -> None:
        if self.byte_addr % BLOCK or self.len_bytes % BLOCK or self.len_bytes <= 0:
            raise ValueError(f"request [{self.byte_addr}, +{self.len_bytes}) not {BLOCK}B-granular")


def build_regions(num_weights: int, ladder: Sequence[FpFormat]) -> RegionTable:
    """Lay the ladder's regions out back to back in ladder order."""
    if num_weights < 1:
        raise ValueError("need at least one weight")
    if not ladder:
        raise ValueError("empty format ladder")
    regions = []
    base = 0
    for fmt in ladder:
        if fmt.is_skip:
            continue  # a skipped chunk occupies no logical space
        size = num_weights * fmt.total_bits
        regions.append(Region(fmt, base, size))
        base += size
    return RegionTable(num_weights, tuple(regions))


def resolve(table: RegionTable, read: LogicalRead) -> tuple[FpFormat, int, int]:
    """Map a logical read to (format, start_weight, weight_count)."""
    if read.addr_bit + read.len_bits > table.total_logical_bits:
        raise ValueError("read beyond the logical space")
    bases = [r.base_bit for r in table.regions]
    idx = bisect_right(bases, read.addr_bit) - 1
    region = table.regions[idx]
    if read.addr_bit + read.len_bits > region.end_bit:
        raise ValueError("cross-region read")
    width = region.fmt.total_bits
    offset = read.addr_bit - region.base_bit
    if offset % width or read.len_bits % width:
        raise ValueError("not weight-aligned")
    return region.fmt, offset // width, read.len_bits // width


def plane_span(layout: PlaneLayout, plane: int, start: int, count: int) -> tuple[int, int]:
    """Aligned physical byte range covering bits [start, start+count) of a plane."""
    plane_base = layout.base_addr + plane * layout.plane_stride
    lo = (plane_base + start // 8) // BLOCK * BLOCK
    last = plane_base + (start + count - 1) // 8
    hi = (last // BLOCK + 1) * BLOCK
    return lo, hi - lo


def translate(
    resolved: tuple[FpFormat, int, int],
    guard: GuardConfig = NO_GUARD,
    layout: PlaneLayout = None,
) -> list[PhysicalRequest]:
    """One aligned request per needed plane covering the weight range."""
    fmt, start, count = resolved
    if fmt.is_skip:
        raise ValueError("cannot translate a skipped chunk")
    if layout is None:
        raise ValueError("translate requires the image layout")
    if not 0 <= start <= start + count <= layout.num_weights:
        raise ValueError(f"weight range [{start}, +{count}) outside the image")
    requests = []
    for p in plane_set(fmt, guard):
        lo, size = plane_span(layout, p, start, count)
        requests.append(PhysicalRequest(lo, size, plane_index=p))
    requests.sort(key=lambda r: r.byte_addr)
    return requests


@dataclass(frozen=True)
class TraditionalLayout:
    """Weight-contiguous FP16 placement: chunk extents in directory order,
    each base aligned to the block granule."""

    base_addr: int
    chunk_starts: tuple[int, ...]  # weight index of each chunk
    chunk_bases: tuple[int, ...]  # physical byte base of each chunk
    num_weights: int

    @classmethod
    def from_directory(cls, directory: ChunkDirectory, base_addr: int = 0) -> "TraditionalLayout":
        starts, bases = [], []
        offset = base_addr
        for chunk in directory:
            starts.append(chunk.start)
            bases.append(offset)
            offset += -(-chunk.length * FP16_BYTES // BLOCK) * BLOCK
        return cls(base_addr, tuple(starts), tuple(bases), directory.num_weights)


def translate_traditional(
    resolved: tuple[FpFormat, int, int], layout: TraditionalLayout
) -> list[PhysicalRequest]:
    """Full-precision fetch of the weight range, split into block requests.

    The target format is irrelevant by construction, except that skipped
    chunks transfer nothing at all.
    """
    fmt, start, count = resolved
    if fmt.is_skip:
        return []
    if not 0 <= start <= start + count <= layout.num_weights:
        raise ValueError(f"weight range [{start}, +{count}) outside the layout")
    idx = bisect_right(layout.chunk_starts, start) - 1
    chunk_base = layout.chunk_bases[idx]
    chunk_start = layout.chunk_starts[idx]
    first = chunk_base + (start - chunk_start) * FP16_BYTES
    last = chunk_base + (start + count - chunk_start) * FP16_BYTES - 1
    lo = first // BLOCK * BLOCK
    hi = (last // BLOCK + 1) * BLOCK
    return [PhysicalRequest(addr, BLOCK) for addr in range(lo, hi, BLOCK)]


def region_report(table: RegionTable) -> list[dict]:
    """Rows for the logical-space map dump."""
    return [
        {
            "format": r.fmt.name,
            "base_bit": r.base_bit,
            "size_bits": r.size_bits,
            "base_byte": r.base_bit // 8,
            "size_bytes": r.size_bits // 8,
        }
        for r in table.regions
    ]
