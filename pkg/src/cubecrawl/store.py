"""Write-once physical cube encodings, all serving the same logical cube.

A store directory holds one binary columnar file per part plus a JSON
manifest with per-part checksums.  Three kinds exist: a plain materialized
cellset, a cellset chunked by a partition dimension (one chunk per partition
value), and the re-chunked form where each region's rows across all partition
values sit in one contiguous slice.  Reads verify checksums and are counted,
so read-amplification claims are testable.

Chunk file layout (little-endian, column-major)::

    magic "CCSTORE1" | version u32 | n_cols u32 | n_rows u64
    per column: name_len u16 | name utf-8 | role u8 (0 dim, 1 measure) | type u8
    per column payload: markers (n_rows u8: 0 value, 1 wildcard, 2 null)
                        then INT64 -> n_rows i64, FLOAT64 -> n_rows f64,
                        BOOL -> n_rows u8,
                        STRING -> offsets (n_rows+1) u32 + utf-8 blob

Non-value rows occupy zeroed payload slots so every column is fixed-shape.
"""

from __future__ import annotations

import hashlib
import json
import struct
import threading
from pathlib import Path
from typing import Mapping, Sequence

from .core import (
    ANY,
    NULL,
    AbstractCube,
    BaseTableGroupByCube,
    CellsetCube,
    Dimension,
    DimensionSchema,
    FeatureFrame,
    FeatureRequest,
    Region,
    _value_sort_key,
    build_cellset,
    filter_by_region,
    format_value,
    schema_from_dict,
    schema_to_dict,
)
from .errors import SchemaError, SpecError, StoreError

MAGIC = b"CCSTORE1"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"

_INT64, _FLOAT64, _STRING, _BOOL = 1, 2, 3, 4
_ROLE_DIM, _ROLE_MEASURE = 0, 1
_MARK_VALUE, _MARK_WILDCARD, _MARK_NULL = 0, 1, 2

_DOMAIN_TYPE = {"string": _STRING, "integer": _INT64, "boolean": _BOOL}


def _checksum(data: bytes) -> str:
    return hashlib.blake2b(data, digest_size=8).hexdigest()


def encode_value(value) -> dict:
    if value is ANY:
        return {"any": True}
    if value is NULL:
        return {"null": True}
    if isinstance(value, bool):
        return {"b": value}
    if isinstance(value, int):
        return {"i": value}
    return {"s": str(value)}


def decode_value(data: Mapping):
    if data.get("any"):
        return ANY
    if data.get("null"):
        return NULL
    if "b" in data:
        return bool(data["b"])
    if "i" in data:
        return int(data["i"])
    return data["s"]


def _pack_column(name: str, role: int, col_type: int, markers: list[int], values: list) -> bytes:
    out = [struct.pack("<H", len(name.encode()))]
    out.append(name.encode())
    out.append(struct.pack("<BB", role, col_type))
    out.append(bytes(markers))
    n = len(markers)
    if col_type == _INT64:
        out.append(struct.pack(f"<{n}q", *(int(v) for v in values)))
    elif col_type == _FLOAT64:
        out.append(struct.pack(f"<{n}d", *(float(v) for v in values)))
    elif col_type == _BOOL:
        out.append(bytes(1 if v else 0 for v in values))
    else:
        blobs = [str(v).encode() for v in values]
        offsets = [0]
        for b in blobs:
            offsets.append(offsets[-1] + len(b))
        out.append(struct.pack(f"<{n + 1}I", *offsets))
        out.append(b"".join(blobs))
    return b"".join(out)


def _write_part(path: Path, dims: Sequence[Dimension], measure_names: Sequence[str],
                rows: Sequence[tuple[tuple, Sequence]]) -> dict:
    """Write one part file; returns its manifest entry fields."""
    n = len(rows)
    header = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(dims) + len(measure_names)),
              struct.pack("<Q", n)]
    body = []
    for j, dim in enumerate(dims):
        markers, values = [], []
        zero = {"string": "", "integer": 0, "boolean": False}[dim.domain]
        for cell, _ in rows:
            v = cell[j]
            if v is ANY:
                markers.append(_MARK_WILDCARD)
                values.append(zero)
            elif v is NULL:
                markers.append(_MARK_NULL)
                values.append(zero)
            else:
                markers.append(_MARK_VALUE)
                values.append(v)
        body.append(_pack_column(dim.name, _ROLE_DIM, _DOMAIN_TYPE[dim.domain], markers, values))
    for j, name in enumerate(measure_names):
        markers, values = [], []
        all_int = True
        for _, measures in rows:
            v = measures[j]
            if v is None:
                markers.append(_MARK_NULL)
                values.append(0)
            else:
                markers.append(_MARK_VALUE)
                values.append(v)
                if not isinstance(v, int) or isinstance(v, bool):
                    all_int = False
        col_type = _INT64 if all_int else _FLOAT64
        body.append(_pack_column(name, _ROLE_MEASURE, col_type, markers, values))
    data = b"".join(header + body)
    path.write_bytes(data)
    return {"file": path.name, "rows": n, "checksum": _checksum(data)}


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise StoreError("part file truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_part(path: Path, expected_checksum: str) -> tuple[list[tuple[str, int, int]], list[list]]:
    """Read and verify one part file; returns (column descriptors, column values)."""
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise StoreError(f"cannot read {path}: {exc}") from None
    if _checksum(data) != expected_checksum:
        raise StoreError(f"checksum mismatch for {path.name}: store is corrupt")
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise StoreError(f"{path.name}: bad magic")
    version, n_cols = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise StoreError(f"{path.name}: unsupported format version {version}")
    (n_rows,) = r.unpack("<Q")
    descriptors = []
    columns = []
    for _ in range(n_cols):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        role, col_type = r.unpack("<BB")
        descriptors.append((name, role, col_type))
        markers = list(r.take(n_rows))
        if col_type == _INT64:
            raw = list(r.unpack(f"<{n_rows}q"))
        elif col_type == _FLOAT64:
            raw = list(r.unpack(f"<{n_rows}d"))
        elif col_type == _BOOL:
            raw = [b == 1 for b in r.take(n_rows)]
        else:
            offsets = r.unpack(f"<{n_rows + 1}I")
            blob = r.take(offsets[-1])
            raw = [blob[offsets[i]:offsets[i + 1]].decode() for i in range(n_rows)]
        values = []
        for marker, v in zip(markers, raw):
            if marker == _MARK_WILDCARD:
                values.append(ANY)
            elif marker == _MARK_NULL:
                values.append(NULL if role == _ROLE_DIM else None)
            else:
                values.append(v)
        columns.append(values)
    return descriptors, columns


def _cell_sort_key(cell: tuple) -> tuple:
    out = []
    for v in cell:
        if v is ANY:
            out.append((0, ""))
        elif v is NULL:
            out.append((1, ""))
        else:
            out.append((2, format_value(v)))
    return tuple(out)


def _rows_from_cells(cells: Mapping[tuple, Mapping[str, object]],
                     measure_names: Sequence[str]) -> list[tuple[tuple, tuple]]:
    rows = [(cell, tuple(values[m] for m in measure_names)) for cell, values in cells.items()]
    rows.sort(key=lambda r: _cell_sort_key(r[0]))
    return rows


def _write_manifest(path: Path, payload: dict) -> None:
    (path / MANIFEST_NAME).write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")


def _read_manifest(path: Path) -> dict:
    manifest_path = Path(path) / MANIFEST_NAME
    try:
        payload = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise StoreError(f"cannot read manifest: {exc}") from None
    except json.JSONDecodeError as exc:
        raise StoreError(f"manifest is not valid JSON: {exc}") from None
    if payload.get("format") != "cube-store" or payload.get("version") != FORMAT_VERSION:
        raise StoreError("not a cube store directory")
    return payload


def materialize(cube: AbstractCube, dims: Sequence[str], path) -> None:
    """Persist the cellset of ``cube`` over ``dims`` as a loadable store."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    cellset = build_cellset(cube, dims)
    rows = _rows_from_cells(cellset.cells, cellset.schema.measure_names)
    entry = _write_part(path / "cells.bin", cellset.schema.dimensions,
                        cellset.schema.measure_names, rows)
    _write_manifest(path, {
        "format": "cube-store",
        "version": FORMAT_VERSION,
        "kind": "cellset",
        "schema": schema_to_dict(cellset.schema),
        "sort": "canonical-cell-key",
        "parts": [dict(entry, key=None)],
    })


def _decode_cells(schema: DimensionSchema, descriptors, columns) -> dict[tuple, dict]:
    names = [d[0] for d in descriptors]
    dim_names = [n for n, role, _ in descriptors if role == _ROLE_DIM]
    measure_names = [n for n, role, _ in descriptors if role == _ROLE_MEASURE]
    if tuple(dim_names) != schema.dimension_names or tuple(measure_names) != schema.measure_names:
        raise StoreError("part columns do not match the manifest schema")
    by_name = dict(zip(names, columns))
    n_rows = len(columns[0]) if columns else 0
    cells = {}
    for i in range(n_rows):
        cell = tuple(by_name[d][i] for d in dim_names)
        cells[cell] = {m: by_name[m][i] for m in measure_names}
    return cells


def load_cellset(path) -> CellsetCube:
    """Load a materialized cellset store, verifying its checksum."""
    path = Path(path)
    manifest = _read_manifest(path)
    if manifest["kind"] != "cellset":
        raise StoreError(f"store at {path} is kind {manifest['kind']!r}, not a plain cellset")
    schema = schema_from_dict(manifest["schema"])
    (part,) = manifest["parts"]
    descriptors, columns = _read_part(path / part["file"], part["checksum"])
    return CellsetCube(schema, _decode_cells(schema, descriptors, columns))


def chunk_by_partition(cube: BaseTableGroupByCube, partition_dim: str,
                       dims: Sequence[str], path) -> "ChunkStore":
    """Materialize one chunk of per-region aggregates per partition value."""
    if not isinstance(cube, BaseTableGroupByCube):
        raise SpecError("chunking needs a base-table cube to partition")
    schema = cube.schema
    schema.dimension(partition_dim)
    dims = tuple(dims)
    if partition_dim in dims:
        raise SpecError("partition dimension cannot also be a chunk dimension")
    for d in dims:
        schema.dimension(d)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    values = cube.region_values(Region(), partition_dim)
    cell_dims = tuple(d for d in schema.dimensions if d.name in dims)
    parts = []
    for i, value in enumerate(values):
        sub_table = filter_by_region(cube.table, Region({partition_dim: value}))
        sub_cube = BaseTableGroupByCube(sub_table, schema)
        cellset = build_cellset(sub_cube, dims)
        rows = _rows_from_cells(cellset.cells, schema.measure_names)
        entry = _write_part(path / f"chunk-{i:05d}.bin", cell_dims, schema.measure_names, rows)
        parts.append(dict(entry, key=encode_value(value)))
    view_schema = DimensionSchema(
        tuple(d for d in schema.dimensions if d.name in dims or d.name == partition_dim),
        schema.measures,
    )
    _write_manifest(path, {
        "format": "cube-store",
        "version": FORMAT_VERSION,
        "kind": "chunked",
        "schema": schema_to_dict(view_schema),
        "partition_dim": partition_dim,
        "cell_dims": list(dims),
        "sort": "canonical-cell-key",
        "parts": parts,
    })
    return ChunkStore(path)


class _PartitionedStore(AbstractCube):
    """Shared view assembly for the chunked and re-chunked encodings."""

    def __init__(self, path):
        self.path = Path(path)
        self.manifest = _read_manifest(self.path)
        if self.manifest["kind"] != self._kind:
            raise StoreError(
                f"store at {self.path} is kind {self.manifest['kind']!r}, expected {self._kind!r}"
            )
        self._schema = schema_from_dict(self.manifest["schema"])
        self.partition_dim = self.manifest["partition_dim"]
        self.cell_dims = tuple(self.manifest["cell_dims"])
        self.counters: dict[str, int] = {self._read_counter: 0}
        self._counter_lock = threading.Lock()

    def _count_read(self) -> None:
        with self._counter_lock:
            self.counters[self._read_counter] += 1

    @property
    def schema(self) -> DimensionSchema:
        return self._schema

    def partition_values(self) -> tuple:
        raise NotImplementedError

    def _iter_matching(self, needed: frozenset, bindings: dict, values: Sequence):
        """Yield (partition value, cell tuple, measure dict) for matching cells."""
        raise NotImplementedError

    def view(self, region: Region, request: FeatureRequest,
             partition_range: tuple | None = None) -> FeatureFrame:
        self._check(region, request)
        bindings = region.bindings()
        partition_binding = bindings.pop(self.partition_dim, None)
        for d in bindings:
            if d not in self.cell_dims:
                raise SchemaError(f"dimension {d!r} is not materialized in this store")
        for a in request.attribute_features:
            if a != self.partition_dim and a not in self.cell_dims:
                raise SchemaError(f"dimension {a!r} is not materialized in this store")

        values = list(self.partition_values())
        if partition_binding is not None:
            values = [v for v in values if v == partition_binding]
        if partition_range is not None:
            lo, hi = partition_range
            values = [v for v in values if (lo is None or v >= lo) and (hi is None or v <= hi)]

        attrs = request.attribute_features
        timeseries = self.partition_dim in attrs
        sub_attrs = tuple(a for a in attrs if a != self.partition_dim)
        needed = frozenset(bindings) | frozenset(sub_attrs)
        cell_names = self.cell_dims

        # merging rows across partitions is only sound for SUM; a single bound
        # partition value or a timeseries view never merges across partitions
        if not timeseries and partition_binding is None:
            for m in request.metric_features:
                if self._schema.measure(m).agg != "sum":
                    raise StoreError(
                        f"measure {m!r} cannot be re-aggregated across partitions; "
                        f"request {self.partition_dim!r} as an attribute instead"
                    )

        rows: dict[tuple, list] = {}
        for value, cell, measures in self._iter_matching(needed, bindings, values):
            by_name = dict(zip(cell_names, cell))
            key_parts = []
            for a in attrs:
                key_parts.append(value if a == self.partition_dim else by_name[a])
            key = tuple(key_parts)
            picked = [measures[m] for m in request.metric_features]
            if key in rows:
                acc = rows[key]
                for i, v in enumerate(picked):
                    acc[i] += v
            else:
                rows[key] = list(picked)
        if not rows and not attrs and region.degree == 0:
            rows[()] = [0 for _ in request.metric_features]
        return FeatureFrame(attrs, request.metric_features,
                            [(k, tuple(v)) for k, v in rows.items()])


class ChunkStore(_PartitionedStore):
    """Per-partition chunks of region aggregates; a window of k dates reads k chunks."""

    _kind = "chunked"
    _read_counter = "chunk_reads"

    def __init__(self, path):
        super().__init__(path)
        self._parts = [(decode_value(p["key"]), p) for p in self.manifest["parts"]]

    def partition_values(self) -> tuple:
        return tuple(v for v, _ in self._parts)

    def _load_chunk(self, part: dict) -> dict[tuple, dict]:
        descriptors, columns = _read_part(self.path / part["file"], part["checksum"])
        self._count_read()
        names = [d[0] for d in descriptors]
        by_name = dict(zip(names, columns))
        n_rows = len(columns[0]) if columns else 0
        cells = {}
        for i in range(n_rows):
            cell = tuple(by_name[d][i] for d in self.cell_dims)
            cells[cell] = {m: by_name[m][i] for m in self._schema.measure_names}
        return cells

    def _iter_matching(self, needed, bindings, values):
        wanted = set(values)
        for value, part in self._parts:
            if value not in wanted:
                continue
            cells = self._load_chunk(part)
            for cell, measures in cells.items():
                by_name = dict(zip(self.cell_dims, cell))
                concrete = frozenset(d for d, v in by_name.items() if v is not ANY)
                if concrete != needed:
                    continue
                if any(by_name[d] != v for d, v in bindings.items()):
                    continue
                yield value, cell, measures


def rechunk(store: ChunkStore, path) -> "RechunkedStore":
    """Pivot a chunked store so each region's rows across partitions are one slice."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    slices: dict[tuple, list] = {}
    for value, part in store._parts:
        for cell, measures in store._load_chunk(part).items():
            slices.setdefault(cell, []).append((value, measures))
    cell_dims = tuple(d for d in store.schema.dimensions if d.name in store.cell_dims)
    partition_dimension = store.schema.dimension(store.partition_dim)
    parts = []
    for i, cell in enumerate(sorted(slices, key=_cell_sort_key)):
        rows = [
            ((value,), tuple(measures[m] for m in store.schema.measure_names))
            for value, measures in sorted(slices[cell], key=lambda r: _value_sort_key(r[0]))
        ]
        entry = _write_part(path / f"slice-{i:05d}.bin", (partition_dimension,),
                            store.schema.measure_names, rows)
        parts.append(dict(entry, key=[encode_value(v) for v in cell]))
    _write_manifest(path, {
        "format": "cube-store",
        "version": FORMAT_VERSION,
        "kind": "rechunked",
        "schema": schema_to_dict(store.schema),
        "partition_dim": store.partition_dim,
        "cell_dims": list(store.cell_dims),
        "partition_values": [encode_value(v) for v in store.partition_values()],
        "sort": "canonical-cell-key",
        "parts": parts,
    })
    return RechunkedStore(path)


class RechunkedStore(_PartitionedStore):
    """Region-keyed slices; any one region's whole timeseries is a single read."""

    _kind = "rechunked"
    _read_counter = "slice_reads"

    def __init__(self, path):
        super().__init__(path)
        self._parts = [(tuple(decode_value(v) for v in p["key"]), p)
                       for p in self.manifest["parts"]]
        self._values = tuple(decode_value(v) for v in self.manifest["partition_values"])

    def partition_values(self) -> tuple:
        return self._values

    def _load_slice(self, part: dict) -> list[tuple]:
        descriptors, columns = _read_part(self.path / part["file"], part["checksum"])
        self._count_read()
        names = [d[0] for d in descriptors]
        by_name = dict(zip(names, columns))
        n_rows = len(columns[0]) if columns else 0
        return [
            (by_name[self.partition_dim][i],
             {m: by_name[m][i] for m in self._schema.measure_names})
            for i in range(n_rows)
        ]

    def _iter_matching(self, needed, bindings, values):
        wanted = set(values)
        for cell, part in self._parts:
            by_name = dict(zip(self.cell_dims, cell))
            concrete = frozenset(d for d, v in by_name.items() if v is not ANY)
            if concrete != needed:
                continue
            if any(by_name[d] != v for d, v in bindings.items()):
                continue
            for value, measures in self._load_slice(part):
                if value in wanted:
                    yield value, cell, measures


def load_store(path) -> AbstractCube:
    """Open any store directory as a cube (cellset, chunked, or rechunked)."""
    manifest = _read_manifest(Path(path))
    kind = manifest["kind"]
    if kind == "cellset":
        return load_cellset(path)
    if kind == "chunked":
        return ChunkStore(path)
    if kind == "rechunked":
        return RechunkedStore(path)
    raise StoreError(f"unknown store kind {kind!r}")
