import logging
from pathlib import Path
from typing import Any

from blendconv.exceptions import ConfigError
from blendconv.logger import current_stage
from blendconv.pipeline import Pipeline

log = logging.getLogger(__name__)

COMMANDS = ("derive-basis", "bin", "transform", "convolve", "train", "retrieve", "bench")


def _int(value: str, flag: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f'{flag} expects an integer, got "{value}"')


def _dims(value: str, flag: str) -> list[int]:
    parts = [p for p in value.replace("x", ",").split(",") if p.strip()]
    if len(parts) != 3:
        raise ConfigError(f'{flag} expects three counts like 25,36,18, got "{value}"')
    return [_int(p.strip(), flag) for p in parts]


def config_overrides(args: dict[str, Any]) -> dict[str, Any]:
    """
    Nested config values set by command-line flags.

    Args:
        args (dict[str, Any]): Parsed docopt arguments.

    Returns:
        dict[str, Any]: Overrides to merge over the config file.
    """
    overrides: dict[str, Any] = {}

    def put(path: str, value: Any) -> None:
        *parents, leaf = path.split(".")
        node = overrides
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value

    if v := args.get("--seed"):
        put("seed", _int(v, "--seed"))
    if v := args.get("--out"):
        put("out_dir", v)
    if v := args.get("--threads"):
        put("threads", _int(v, "--threads"))
    if v := args.get("--n-max"):
        put("basis.n_max", _int(v, "--n-max"))
    if v := args.get("--mode"):
        put("basis.mode", v)
    if v := args.get("--dims"):
        put("grid.dims", _dims(v, "--dims"))
        put("grid.preset", None)
    if v := args.get("--lattice"):
        put("network.lattice_dims", _dims(v, "--lattice"))
    if v := args.get("--translation"):
        put("network.translation", v)
    if v := args.get("--projection"):
        put("network.projection", v)
    if v := args.get("--metric"):
        put("retrieval.metrics", [v])
    return overrides


async def process_args(pipeline: Pipeline, args: dict[str, Any]) -> None:
    """
    Dispatch CLI arguments to pipeline commands.

    Args:
        pipeline (Pipeline): Pipeline bound to the resolved configuration.
        args (dict[str, Any]): Parsed docopt arguments.

    Returns:
        None
    """
    command = next((c for c in COMMANDS if args.get(c)), None)
    if command is None:
        raise ConfigError("no command given")

    token = current_stage.set(command)
    try:
        if command == "derive-basis":
            await pipeline.derive_basis()
        elif command == "bin":
            await pipeline.bin_clouds([Path(p) for p in args["INPUT"]])
        elif command == "transform":
            await pipeline.transform(Path(args["GRID"]), args["--reconstruct"])
        elif command == "convolve":
            await pipeline.convolve(Path(args["TENSOR"]), Path(args["KERNEL"]))
        elif command == "train":
            await pipeline.train()
        elif command == "retrieve":
            await pipeline.retrieve(Path(args["CHECKPOINT"]), args["--self-query"])
        elif command == "bench":
            await pipeline.bench()
    finally:
        current_stage.reset(token)
