"""Raw image container: sections of bytes at virtual addresses plus entry points.

On disk an image is a manifest (structured text) next to a raw byte blob:

    SECTION <name> <vaddr-hex> <size> <file-offset> <X|->
    ENTRY <addr-hex> <A|T>
    BLOB <filename>

'X' marks an executable section. '#' starts a comment. The blob is referenced
by file name relative to the manifest; round trips are bit exact.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .model import Mode, ParseError


class OutOfSection(Exception):
    """An address fell outside the expected section ranges."""


@dataclass(frozen=True)
class Section:
    name: str
    vaddr: int
    size: int
    file_offset: int
    executable: bool

    @property
    def end(self):
        return self.vaddr + self.size

    def contains(self, addr):
        return self.vaddr <= addr < self.end


@dataclass(frozen=True)
class RawImage:
    sections: tuple
    blob: bytes
    entry_points: tuple = ()

    def __post_init__(self):
        secs = tuple(sorted(self.sections, key=lambda s: s.vaddr))
        object.__setattr__(self, "sections", secs)
        object.__setattr__(self, "entry_points", tuple(self.entry_points))
        for sec in secs:
            if sec.size < 0 or sec.file_offset < 0:
                raise ParseError(f"section {sec.name}: negative size or offset")
            if sec.file_offset + sec.size > len(self.blob):
                raise ParseError(
                    f"section {sec.name}: file range ends at byte "
                    f"{sec.file_offset + sec.size}, blob has {len(self.blob)}"
                )
        for a, b in zip(secs, secs[1:]):
            if b.vaddr < a.end:
                raise ParseError(f"sections {a.name} and {b.name} overlap at {b.vaddr:#x}")
        for addr, mode in self.entry_points:
            if mode is Mode.DATA:
                raise ParseError(f"entry point {addr:#x} with data mode")
            sec = self.section_at(addr)
            if sec is None or not sec.executable:
                raise ParseError(f"entry point {addr:#x} outside executable sections")

    def section_at(self, addr):
        for sec in self.sections:
            if sec.contains(addr):
                return sec
        return None

    def in_executable(self, addr):
        sec = self.section_at(addr)
        return sec is not None and sec.executable

    def read(self, addr, n):
        """Read n bytes at addr; the whole range must sit in one section."""
        sec = self.section_at(addr)
        if sec is None or addr + n > sec.end:
            raise OutOfSection(f"read of {n} bytes at {addr:#x}")
        off = sec.file_offset + (addr - sec.vaddr)
        return self.blob[off : off + n]

    def try_read(self, addr, n):
        try:
            return self.read(addr, n)
        except OutOfSection:
            return None

    def read_word(self, addr):
        """Little-endian 32-bit word at addr, or None if out of range."""
        raw = self.try_read(addr, 4)
        return None if raw is None else int.from_bytes(raw, "little")

    def executable_sections(self):
        return [s for s in self.sections if s.executable]


def parse_image_manifest(text):
    sections = []
    entries = []
    blob_name = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        tag = fields[0]
        try:
            if tag == "SECTION":
                if len(fields) != 6 or fields[5] not in ("X", "-"):
                    raise ValueError("expected: SECTION <name> <vaddr> <size> <offset> <X|->")
                sections.append(
                    Section(
                        name=fields[1],
                        vaddr=int(fields[2], 16),
                        size=int(fields[3]),
                        file_offset=int(fields[4]),
                        executable=fields[5] == "X",
                    )
                )
            elif tag == "ENTRY":
                if len(fields) != 3:
                    raise ValueError("expected: ENTRY <addr> <A|T>")
                entries.append((int(fields[1], 16), Mode(fields[2])))
            elif tag == "BLOB":
                if len(fields) != 2:
                    raise ValueError("expected: BLOB <filename>")
                blob_name = fields[1]
            else:
                raise ValueError(f"unknown record tag {tag!r}")
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    if blob_name is None:
        raise ParseError("manifest has no BLOB record")
    return sections, entries, blob_name


def load_image(manifest_path):
    with open(manifest_path, "r", encoding="utf-8") as fh:
        sections, entries, blob_name = parse_image_manifest(fh.read())
    blob_path = os.path.join(os.path.dirname(manifest_path) or ".", blob_name)
    with open(blob_path, "rb") as fh:
        blob = fh.read()
    return RawImage(tuple(sections), blob, tuple(entries))


def format_image_manifest(image, blob_name):
    lines = ["# raw image manifest"]
    for sec in image.sections:
        flag = "X" if sec.executable else "-"
        lines.append(f"SECTION {sec.name} {sec.vaddr:x} {sec.size} {sec.file_offset} {flag}")
    for addr, mode in image.entry_points:
        lines.append(f"ENTRY {addr:x} {mode}")
    lines.append(f"BLOB {blob_name}")
    return "\n".join(lines) + "\n"


def save_image(image, manifest_path, blob_name=None):
    if blob_name is None:
        base = os.path.basename(manifest_path)
        blob_name = os.path.splitext(base)[0] + ".bin"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(format_image_manifest(image, blob_name))
    blob_path = os.path.join(os.path.dirname(manifest_path) or ".", blob_name)
    with open(blob_path, "wb") as fh:
        fh.write(image.blob)
    return blob_path


def make_image(section_bytes, entry_points=()):
    """Build a RawImage from [(name, vaddr, bytes, executable)] tuples."""
    blob = bytearray()
    sections = []
    for name, vaddr, data, executable in section_bytes:
        sections.append(Section(name, vaddr, len(data), len(blob), executable))
        blob.extend(data)
    return RawImage(tuple(sections), bytes(blob), tuple(entry_points))
