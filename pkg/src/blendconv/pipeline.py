from __future__ import annotations

import asyncio
import logging
from pathlib import Path
from typing import Any, Awaitable, Callable, Iterable, TypeVar

import numpy as np

from blendconv import bench as bench_mod
from blendconv.basis import (
    BasisSet,
    RadialMode,
    orthogonality_residual,
    orthogonalize,
    power_coefficients,
)
from blendconv.config import RunConfig
from blendconv.convolution import ConvLattice, blended_conv, kernel_spectrum
from blendconv.datasets import (
    ShapeDataset,
    jittered,
    load_shape_files,
    make_synthetic_dataset,
    split_dataset,
)
from blendconv.documents import (
    BasisDocument,
    CheckpointDocument,
    FieldDocument,
    GalleryDocument,
    GridDocument,
    TensorDocument,
    load_document,
    save_document,
)
from blendconv.exceptions import ConfigError, DivergenceError
from blendconv.files import load_asset_json, save_csv, save_text
from blendconv.network import BlendNet, NetworkParams, Sample, accuracy
from blendconv.parsers import load_point_cloud
from blendconv.retrieval import (
    PCAReducer,
    build_gallery,
    descriptor,
    evaluate,
)
from blendconv.template import render_report
from blendconv.training import HistoryEntry, train
from blendconv.transform import (
    BallGrid,
    PointCloud,
    bin_point_cloud,
    forward_moments,
    normalize,
    reconstruct,
    relative_error,
)
from blendconv.utils import Timer, default_threads

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def artifact_stem(path: Path) -> str:
    """File name without any suffix: `chair.grid.json` -> `chair`."""
    return path.name.split(".", 1)[0]


def reference_rows(n_max: int) -> list[dict[str, Any]]:
    """Power coefficients of the truncated-sum radials next to the reference table."""
    derived = power_coefficients(orthogonalize(n_max, RadialMode.TRUNCATED_SUM))
    rows = []
    for entry in load_asset_json("reference_radials.json")["entries"]:
        n, l = int(entry["n"]), int(entry["l"])
        if n > n_max:
            continue
        ours = np.asarray(derived[(n, l)], dtype=np.float64)
        theirs = np.asarray(entry["coeffs"], dtype=np.float64)
        width = max(len(ours), len(theirs))
        diff = np.abs(
            np.pad(ours, (0, width - len(ours)))
            - np.pad(theirs, (0, width - len(theirs)))
        )
        rows.append(
            {
                "n": n,
                "l": l,
                "derived": [f"{c:.6g}" for c in ours],
                "reference": [f"{c:.6g}" for c in theirs],
                "diff": float(diff.max(initial=0.0)),
            }
        )
    return rows


class Pipeline:
    """
    Run the command-line pipeline stages for one resolved configuration.

    Per-shape work runs in worker threads, at most `threads` at a time;
    results keep input order so outputs do not depend on scheduling.
    """

    def __init__(self, config: RunConfig, basis_file: Path | None = None) -> None:
        self.config = config
        self.out_dir = config.out_dir
        self.threads = config.threads or default_threads()
        self.basis_file = basis_file
        self._basis: BasisSet | None = None

    @property
    def basis(self) -> BasisSet:
        if self._basis is None:
            if self.basis_file is not None:
                self._basis = load_document(self.basis_file, BasisDocument).to_basis()
                log.debug(f'loaded basis {self._basis.digest} from "{self.basis_file}"')
            else:
                cfg = self.config.basis
                self._basis = orthogonalize(cfg.n_max, cfg.mode, cfg.quadrature_nodes)
        return self._basis

    async def _map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        semaphore = asyncio.Semaphore(self.threads)

        async def run(item: T) -> R:
            async with semaphore:
                return await asyncio.to_thread(fn, item)

        tasks: list[Awaitable[R]] = [run(item) for item in items]
        return list(await asyncio.gather(*tasks))

    def _bin(self, cloud: PointCloud) -> BallGrid:
        return bin_point_cloud(normalize(cloud), self.config.grid.dims)

    async def derive_basis(self) -> BasisSet:
        """Derive the basis, write it and the cross-check report."""
        cfg = self.config.basis
        timer = Timer()
        basis = await asyncio.to_thread(
            orthogonalize, cfg.n_max, cfg.mode, cfg.quadrature_nodes
        )
        seconds = timer.elapsed
        residual = orthogonality_residual(basis)
        rows = await asyncio.to_thread(reference_rows, cfg.n_max)

        save_document(self.out_dir / "basis.json", BasisDocument.from_basis(basis))
        report = render_report(
            "basis_report.txt.j2",
            {
                "n_max": basis.n_max,
                "mode": str(basis.mode),
                "digest": basis.digest,
                "residual": residual,
                "seconds": seconds,
                "rows": rows,
            },
        )
        save_text(self.out_dir / "basis_report.txt", report)
        save_csv(
            self.out_dir / "basis_report.csv",
            ["n", "l", "max_abs_diff"],
            [[row["n"], row["l"], row["diff"]] for row in rows],
        )
        log.info(
            f"derived n_max={basis.n_max} {basis.mode} basis in {seconds:.3f} sec, "
            f"orthogonality residual {residual:.3e}"
        )
        self._basis = basis
        return basis

    async def bin_clouds(self, inputs: list[Path]) -> list[BallGrid]:
        """Bin every input cloud onto the configured grid."""
        clouds = await self._map(load_point_cloud, inputs)
        grids = await self._map(self._bin, clouds)
        for path, cloud, grid in zip(inputs, clouds, grids):
            out = self.out_dir / f"{artifact_stem(path)}.grid.json"
            save_document(out, GridDocument.from_grid(grid))
            log.info(f'binned {len(cloud)} points into "{out}" ({grid.point_count} binned)')
        return grids

    async def transform(self, grid_file: Path, with_reconstruction: bool = False) -> None:
        grid = load_document(grid_file, GridDocument).to_grid()
        basis = self.basis
        tensor = await asyncio.to_thread(forward_moments, grid, basis)
        stem = artifact_stem(grid_file)
        save_document(
            self.out_dir / f"{stem}.tensor.json",
            TensorDocument.from_tensor(tensor, basis.digest),
        )
        log.info(f'moments of "{grid_file}" up to n_max={tensor.n_max}')

        if with_reconstruction:
            approx = await asyncio.to_thread(reconstruct, tensor, basis, grid.dims)
            save_document(
                self.out_dir / f"{stem}.recon.grid.json", GridDocument.from_grid(approx)
            )
            log.info(f"reconstruction relative error {relative_error(grid, approx):.4f}")

    async def convolve(self, tensor_file: Path, kernel_file: Path) -> None:
        document = load_document(tensor_file, TensorDocument)
        basis = self.basis
        if document.basis and document.basis != basis.digest:
            raise ConfigError(
                f'"{tensor_file}" was computed with basis {document.basis}, '
                f"not {basis.digest}"
            )
        tensor = document.to_tensor()
        kernel_grid = load_document(kernel_file, GridDocument).to_grid()
        g_spec = kernel_spectrum(kernel_grid, basis)
        lattice = ConvLattice.from_dims(self.config.network.lattice_dims)
        translation = self.config.network.translation

        conv_field = await asyncio.to_thread(
            blended_conv, tensor, g_spec, basis, lattice, translation
        )
        out = self.out_dir / f"{artifact_stem(tensor_file)}.field.json"
        save_document(out, FieldDocument.from_field(conv_field))
        r, a, b = conv_field.argmax()
        log.info(
            f'{translation} convolution over {lattice.size} poses written to "{out}", '
            f"peak at r'={lattice.radii[r]:.3f} alpha={lattice.alphas[a]:.3f} "
            f"beta={lattice.betas[b]:.3f}"
        )

    def _datasets(self) -> tuple[ShapeDataset, ShapeDataset]:
        cfg = self.config.dataset
        if cfg.glob:
            return split_dataset(load_shape_files(cfg.glob), cfg.test_fraction, self.config.seed)
        train_set = make_synthetic_dataset(
            cfg.classes, cfg.per_class, cfg.jitter, self.config.seed, cfg.points
        )
        test_per_class = cfg.per_class if cfg.test_per_class is None else cfg.test_per_class
        if test_per_class == 0:
            return train_set, ShapeDataset([], [], list(cfg.classes))
        test_set = make_synthetic_dataset(
            cfg.classes, test_per_class, cfg.jitter, self.config.seed + 1, cfg.points
        )
        return train_set, test_set

    async def _samples(self, net: BlendNet, dataset: ShapeDataset) -> list[Sample]:
        grids = await self._map(self._bin, dataset.clouds)
        return await self._map(
            lambda pair: net.prepare(*pair), list(zip(grids, dataset.labels))
        )

    async def train(self) -> NetworkParams:
        """Train on the configured dataset and write checkpoint, history and report."""
        basis = self.basis
        net = BlendNet(basis, self.config.network)
        train_set, test_set = self._datasets()
        log.info(f"training on {len(train_set)} shapes, testing on {len(test_set)}")
        train_samples = await self._samples(net, train_set)
        test_samples = await self._samples(net, test_set)

        try:
            result = await asyncio.to_thread(
                train, net, train_samples, self.config.train, len(train_set.classes)
            )
        except DivergenceError as e:
            self._save_history(e.history)
            raise

        self._save_history(result.history)
        params = result.params
        save_document(
            self.out_dir / "checkpoint.json",
            CheckpointDocument.from_params(
                params, basis.digest, self.config.network, train_set.classes
            ),
        )

        train_acc = accuracy(net.predict(params, train_samples), train_set.labels)
        test_acc = (
            accuracy(net.predict(params, test_samples), test_set.labels) if test_samples else None
        )
        losses = result.losses
        report = render_report(
            "train_report.txt.j2",
            {
                "classes": train_set.classes,
                "projection": str(self.config.network.projection),
                "translation": str(self.config.network.translation),
                "steps": len(losses),
                "initial_loss": losses[0] if losses else float("nan"),
                "final_loss": losses[-1] if losses else float("nan"),
                "train_accuracy": train_acc,
                "test_accuracy": test_acc,
            },
        )
        save_text(self.out_dir / "train_report.txt", report)
        if test_acc is None:
            log.info(f"train accuracy {train_acc:.4f}, no held-out shapes")
        else:
            log.info(f"train accuracy {train_acc:.4f}, test accuracy {test_acc:.4f}")
        return params

    def _save_history(self, history: list[HistoryEntry]) -> None:
        save_csv(
            self.out_dir / "history.csv",
            ["step", "phase", "loss"],
            [[h.step, h.phase, h.loss] for h in history],
        )

    async def retrieve(self, checkpoint_file: Path, self_query: bool = False) -> None:
        """Describe the test shapes with a trained network and evaluate retrieval."""
        checkpoint = load_document(checkpoint_file, CheckpointDocument)
        basis = self.basis
        if checkpoint.basis != basis.digest:
            raise ConfigError(
                f"checkpoint was trained on basis {checkpoint.basis}, not {basis.digest}"
            )
        net = BlendNet(basis, checkpoint.network)
        params = checkpoint.to_params()
        _, dataset = self._datasets()
        if len(dataset) == 0:
            raise ConfigError("no held-out shapes to retrieve, raise dataset.test_per_class")
        samples = await self._samples(net, dataset)
        ids = [f"shape-{i:04d}" for i in range(len(samples))]

        reducer = PCAReducer(self.config.retrieval.dim)
        gallery = await asyncio.to_thread(build_gallery, net, params, samples, ids, reducer)
        save_document(
            self.out_dir / "gallery.json",
            GalleryDocument.from_gallery(gallery, checkpoint.classes),
        )

        if self_query:
            queries = gallery.descriptors
            query_labels = list(range(len(gallery)))
            gallery_labels = list(range(len(gallery)))
        else:
            rng = np.random.default_rng(self.config.seed)
            copies = [jittered(c, self.config.retrieval.jitter, rng) for c in dataset.clouds]
            grids = await self._map(self._bin, copies)
            queries = await self._map(
                lambda grid: descriptor(net, params, net.prepare(grid), reducer), grids
            )
            query_labels = list(dataset.labels)
            gallery_labels = list(gallery.labels)

        reports = [
            evaluate(
                queries,
                gallery.descriptors,
                query_labels,
                gallery_labels,
                metric,
                self_query=self_query,
            )
            for metric in self.config.retrieval.metrics
        ]
        save_csv(
            self.out_dir / "retrieval.csv",
            ["metric", "nn_accuracy", "mAP"],
            [report.row() for report in reports],
        )
        save_text(
            self.out_dir / "retrieval_report.txt",
            render_report(
                "retrieval_report.txt.j2",
                {
                    "gallery": len(gallery),
                    "queries": len(queries),
                    "dim": reducer.dim,
                    "self_query": self_query,
                    "reports": reports,
                },
            ),
        )
        for report in reports:
            log.info(
                f"{report.metric}: nn-accuracy {report.nn_accuracy:.4f}, mAP {report.mean_ap:.4f}"
            )

    async def bench(self) -> None:
        """Write the cost sweep and the oracle error table."""
        cfg = self.config
        timer = Timer()
        rows = await asyncio.to_thread(
            bench_mod.run_sweep, cfg.bench, cfg.kernel, cfg.grid.dims, cfg.seed
        )
        save_csv(self.out_dir / "bench.csv", bench_mod.BenchRow.header(), bench_mod.as_rows(rows))

        oracle = await asyncio.to_thread(
            bench_mod.oracle_errors, self.basis, cfg.bench, cfg.kernel, cfg.seed
        )
        save_csv(
            self.out_dir / "oracle_errors.csv",
            bench_mod.OracleRow.header(),
            bench_mod.as_rows(oracle),
        )
        log.info(f"bench wrote {len(rows)} rows in {timer.elapsed:.1f} sec")
