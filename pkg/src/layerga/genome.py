"""Binary encoding of a trainable-layer window.

A candidate solution is one contiguous block of trainable layers inside an
otherwise frozen network, described by its two bounds (l_start, l_end).
Each bound is stored as an unsigned integer block, most significant bit
first, l_start block before l_end block.  The block width is the smallest
that covers the layer range: 8 bits for the reference network's 156 layers
(2^8 = 256), so the default genome is 16 bits::

    genome  = s7 s6 s5 s4 s3 s2 s1 s0  e7 e6 e5 e4 e3 e2 e1 e0
    example = 1  0  0  0  0  0  1  1   1  0  0  0  0  1  0  1   -> (131, 133)

Raw block values can exceed ``l_max`` (255 vs 156 by default), so decoding
is followed by a repair step: clamp each value into [0, l_max], then swap
if the bounds are inverted.  Every bit string therefore maps to a valid
window, and the genetic operators never have to reject offspring.

Genomes are plain ``str`` values over the alphabet ``{'0', '1'}``; this is
also their text form in population dump files.
"""

from __future__ import annotations

from dataclasses import dataclass

# A genome is a fixed-length string of '0'/'1' characters.
BitGenome = str

DEFAULT_L_MAX = 156
BITS_PER_PARAM = 8


class MalformedGenomeError(ValueError):
    """Genome text does not match the layout (wrong length or alphabet)."""


class WindowRangeError(ValueError):
    """Window bounds fall outside the encodable layer range."""


def bits_for(l_max: int) -> int:
    """Smallest block width whose range covers [0, l_max].

    The reference bound 156 needs 8 bits since 2^8 = 256; smaller search
    spaces shrink accordingly so random bits spread over the real range
    instead of piling up on the clamp boundary.
    """
    if l_max < 0:
        raise ValueError("l_max must be >= 0")
    return max(1, (l_max).bit_length())


@dataclass(frozen=True)
class GenomeLayout:
    """Fixed geometry of the bit string.

    ``bits_per_param`` defaults to the smallest width covering ``l_max``
    (8 for the reference network, giving 16 genome bits in total); ``l_max``
    is configurable because tests and the brute-force oracle run on much
    smaller layer ranges.
    """

    bits_per_param: int | None = None
    l_max: int = DEFAULT_L_MAX

    def __post_init__(self) -> None:
        if self.l_max < 0:
            raise ValueError("l_max must be >= 0")
        if self.bits_per_param is None:
            object.__setattr__(self, "bits_per_param", bits_for(self.l_max))
        if self.bits_per_param < 1:
            raise ValueError("bits_per_param must be >= 1")
        if 2**self.bits_per_param <= self.l_max:
            raise ValueError(
                f"{self.bits_per_param} bits cannot represent layer index {self.l_max}"
            )

    @property
    def total_bits(self) -> int:
        return 2 * self.bits_per_param

    @property
    def raw_max(self) -> int:
        return 2**self.bits_per_param - 1


@dataclass(frozen=True, order=True)
class Window:
    """A decoded, repaired pair of layer indices bounding the trainable block."""

    l_start: int
    l_end: int

    def __post_init__(self) -> None:
        if self.l_start < 0 or self.l_end < self.l_start:
            raise WindowRangeError(
                f"window requires 0 <= l_start <= l_end, got ({self.l_start}, {self.l_end})"
            )

    @property
    def span(self) -> int:
        return self.l_end - self.l_start


def validate_genome(genome: BitGenome, layout: GenomeLayout) -> None:
    """Raise :class:`MalformedGenomeError` unless ``genome`` fits ``layout``."""
    if len(genome) != layout.total_bits:
        raise MalformedGenomeError(
            f"expected {layout.total_bits} bits, got {len(genome)}"
        )
    if any(c not in "01" for c in genome):
        raise MalformedGenomeError(f"genome contains non-binary characters: {genome!r}")


def random_genome(rng, layout: GenomeLayout) -> BitGenome:
    """Draw a genome with every bit independently uniform over {0, 1}."""
    bits = rng.integers(0, 2, size=layout.total_bits)
    return "".join("1" if b else "0" for b in bits)


def decode_raw(genome: BitGenome, layout: GenomeLayout) -> tuple[int, int]:
    """Interpret the two blocks MSB-first as unsigned integers, unclamped."""
    validate_genome(genome, layout)
    k = layout.bits_per_param
    return int(genome[:k], 2), int(genome[k:], 2)


def repair(raw_start: int, raw_end: int, layout: GenomeLayout) -> Window:
    """Map any raw decoding onto a valid window: clamp to l_max, then swap."""
    start = min(max(raw_start, 0), layout.l_max)
    end = min(max(raw_end, 0), layout.l_max)
    if start > end:
        start, end = end, start
    return Window(start, end)


def decode(genome: BitGenome, layout: GenomeLayout) -> Window:
    """Decode and repair in one step."""
    return repair(*decode_raw(genome, layout), layout)


def encode(window: Window, layout: GenomeLayout) -> BitGenome:
    """Inverse of :func:`decode` for valid windows."""
    if window.l_end > layout.l_max:
        raise WindowRangeError(
            f"window ({window.l_start}, {window.l_end}) exceeds l_max={layout.l_max}"
        )
    k = layout.bits_per_param
    return format(window.l_start, f"0{k}b") + format(window.l_end, f"0{k}b")
