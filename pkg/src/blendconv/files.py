import csv
import json
import logging
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import yaml

from blendconv import assets

log = logging.getLogger(__name__)


def load_yaml(file: Path) -> dict[str, Any]:
    """
    Load a YAML file into a dict.

    Args:
        file (Path): Path to YAML file.

    Returns:
        dict[str, Any]: Parsed data.
    """
    with open(file, encoding="utf-8") as f:
        data = yaml.safe_load(f)
        if data is None:
            data = {}

        if not isinstance(data, dict):
            raise ValueError(f"expected type dict, found {type(data).__name__}")

        return data


def save_yaml(file: Path, data: dict[str, Any]) -> None:
    dump = yaml.dump(data, indent=4, default_flow_style=False)
    with open(file, "w", encoding="utf-8") as f:
        f.write(dump)


def load_json(file: Path) -> dict[str, Any]:
    """
    Load a JSON file into a dict.

    Args:
        file (Path): Path to JSON file.

    Returns:
        dict[str, Any]: Parsed data.
    """
    with open(file, encoding="utf-8") as f:
        data = json.load(f)

        if data is None:
            data = {}

        if not isinstance(data, dict):
            raise ValueError(f"expected type dict, found {type(data).__name__}")

        return data


def save_json(file: Path, data: dict[str, Any]) -> None:
    """
    Save a dict to JSON.

    Python's float repr is the shortest string that reads back to the same
    double, so documents round-trip bit-exactly.

    Args:
        file (Path): Output path.
        data (dict[str, Any]): Data to serialize.

    Returns:
        None
    """
    file.parent.mkdir(parents=True, exist_ok=True)
    dump = json.dumps(data, indent=1)
    with open(file, "w", encoding="utf-8") as f:
        f.write(dump)
    log.debug(f'saved "{file}"')


def load_config_file(file: Path) -> dict[str, Any]:
    """Load a YAML or JSON config file, chosen by suffix."""
    if file.suffix in (".yaml", ".yml"):
        return load_yaml(file)
    return load_json(file)


def save_csv(
    file: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> None:
    file.parent.mkdir(parents=True, exist_ok=True)
    with open(file, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    log.debug(f'saved "{file}"')


def load_csv(file: Path) -> list[dict[str, str]]:
    with open(file, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def save_text(file: Path, text: str) -> None:
    file.parent.mkdir(parents=True, exist_ok=True)
    with open(file, "w", encoding="utf-8") as f:
        f.write(text)


def load_asset_json(name: str) -> dict[str, Any]:
    """
    Load a JSON document shipped in the `assets` package.

    Args:
        name (str): File name inside `blendconv/assets`.

    Returns:
        dict[str, Any]: Parsed data.
    """
    with resources.as_file(resources.files(assets) / name) as source:
        return load_json(source)


def read_asset_text(name: str) -> str:
    return (resources.files(assets) / name).read_text(encoding="utf-8")
