import logging
from pathlib import Path
from typing import Iterator

import numpy as np

from blendconv.exceptions import ParseError
from blendconv.transform import PointCloud

log = logging.getLogger(__name__)

POINT_CLOUD_SUFFIXES = (".xyz", ".txt", ".off")


def _content_lines(path: Path) -> Iterator[tuple[int, str]]:
    """
    Numbered lines without comments, skipping blank ones.

    Raises:
        ParseError: On the first line that is not valid UTF-8.
    """
    with open(path, "rb") as f:
        for number, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise ParseError(path, number, f"not UTF-8 text ({e.reason})") from e
            text = line.split("#", 1)[0].strip()
            if text:
                yield number, text


def _floats(path: Path, number: int, fields: list[str]) -> list[float]:
    try:
        values = [float(v) for v in fields]
    except ValueError:
        raise ParseError(path, number, f'expected numbers, got "{" ".join(fields)}"')
    if not all(np.isfinite(values)):
        raise ParseError(path, number, "non-finite coordinate")
    return values


def parse_xyz(path: Path) -> PointCloud:
    """
    Parse whitespace-separated `x y z [c]` lines.

    Args:
        path (Path): Text file.

    Returns:
        PointCloud: Points, with unit texture where `c` is absent.

    Raises:
        ParseError: On a malformed line, naming file and line.
    """
    points: list[list[float]] = []
    texture: list[float] = []
    width: int | None = None

    for number, text in _content_lines(path):
        fields = text.replace(",", " ").split()
        if len(fields) not in (3, 4):
            raise ParseError(path, number, f"expected 3 or 4 values, got {len(fields)}")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise ParseError(
                path, number, f"expected {width} values like the first line, got {len(fields)}"
            )
        values = _floats(path, number, fields)
        points.append(values[:3])
        texture.append(values[3] if len(values) == 4 else 1.0)

    return PointCloud(np.array(points).reshape(-1, 3), np.array(texture))


def parse_off(path: Path) -> PointCloud:
    """
    Read the vertices of an ASCII OFF mesh as a point cloud.

    Counts may follow `OFF` on the same line, as some mesh exporters write.

    Raises:
        ParseError: On a missing header, bad counts or a malformed vertex.
    """
    lines = _content_lines(path)

    try:
        number, header = next(lines)
    except StopIteration:
        raise ParseError(path, 1, "empty file")
    if not header.startswith("OFF"):
        raise ParseError(path, number, f'expected "OFF" header, got "{header}"')

    rest = header[3:].split()
    if not rest:
        try:
            number, counts_line = next(lines)
        except StopIteration:
            raise ParseError(path, number, "missing vertex and face counts")
        rest = counts_line.split()
    try:
        vertex_count = int(rest[0])
    except (ValueError, IndexError):
        raise ParseError(path, number, f"bad counts line \"{' '.join(rest)}\"")
    if vertex_count < 0:
        raise ParseError(path, number, f"negative vertex count {vertex_count}")

    points = []
    for _ in range(vertex_count):
        try:
            number, text = next(lines)
        except StopIteration:
            raise ParseError(
                path, number, f"expected {vertex_count} vertices, found {len(points)}"
            )
        fields = text.split()
        if len(fields) < 3:
            raise ParseError(path, number, f"vertex needs 3 coordinates, got {len(fields)}")
        points.append(_floats(path, number, fields[:3]))

    return PointCloud(np.array(points).reshape(-1, 3))


def load_point_cloud(path: Path, label: int | None = None) -> PointCloud:
    """Parse a point cloud file, choosing the format by suffix."""
    if not path.is_file():
        raise ParseError(path, 0, "file not found")
    if path.suffix.lower() == ".off":
        cloud = parse_off(path)
    else:
        cloud = parse_xyz(path)
    log.debug(f'parsed {len(cloud)} points from "{path}"')
    return PointCloud(cloud.points, cloud.texture, label)


def format_xyz(cloud: PointCloud) -> str:
    return "".join(
        f"{x!r} {y!r} {z!r} {c!r}\n"
        for (x, y, z), c in zip(cloud.points.tolist(), cloud.texture.tolist())
    )
