"""Schemas, regions, feature frames, and the two foundational cube types.

A cube is a function from (region, requested features) to a grouped,
aggregated table.  ``BaseTableGroupByCube`` computes that function from an
immutable in-memory base table; ``CellsetCube`` serves it from materialized
cells keyed by full-width value patterns where ``ANY`` marks a dimension
that was aggregated over.
"""

from __future__ import annotations

import csv
import itertools
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .errors import DataError, SchemaError


class _Singleton:
    _name = "?"

    def __repr__(self):
        return self._name

    def __reduce__(self):
        return (self.__class__, ())


class _Null(_Singleton):
    """Sentinel for a missing dimension value; it participates in grouping."""

    _name = "NULL"
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance


class _Any(_Singleton):
    """Wildcard slot of a cellset cell: the dimension was aggregated over."""

    _name = "*"
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance


NULL = _Null()
ANY = _Any()

#: value domains accepted for dimension columns
DOMAINS = ("string", "integer", "boolean")

_TRUE_WORDS = {"true", "t", "1", "yes", "y"}
_FALSE_WORDS = {"false", "f", "0", "no", "n"}


def _value_sort_key(value):
    # NULL groups last; within a column values share one concrete type.
    if value is NULL:
        return (2, "")
    if isinstance(value, bool):
        return (0, int(value))
    return (0, value)


def _row_sort_key(values):
    return tuple(_value_sort_key(v) for v in values)


def format_value(value) -> str:
    """Stable text form of a dimension value (used by keys, CSV, stores)."""
    if value is NULL:
        return "NULL"
    if value is ANY:
        return "*"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


@dataclass(frozen=True)
class Dimension:
    name: str
    domain: str = "string"

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise SchemaError(f"unknown domain {self.domain!r} for dimension {self.name!r}")

    def parse(self, text: str):
        """Parse a CSV cell into a typed value; empty text becomes NULL."""
        if text == "":
            return NULL
        if self.domain == "string":
            return text
        if self.domain == "integer":
            try:
                return int(text)
            except ValueError:
                raise DataError(f"dimension {self.name!r}: {text!r} is not an integer") from None
        low = text.strip().lower()
        if low in _TRUE_WORDS:
            return True
        if low in _FALSE_WORDS:
            return False
        raise DataError(f"dimension {self.name!r}: {text!r} is not a boolean")


@dataclass(frozen=True)
class Measure:
    """An aggregated column: SUM over one source, or COUNT_DISTINCT over source tuples."""

    name: str
    agg: str = "sum"
    sources: tuple[str, ...] = ()

    def __post_init__(self):
        if self.agg not in ("sum", "count_distinct"):
            raise SchemaError(f"unknown aggregator {self.agg!r} for measure {self.name!r}")
        if not self.sources:
            object.__setattr__(self, "sources", (self.name,))
        if self.agg == "sum" and len(self.sources) != 1:
            raise SchemaError(f"sum measure {self.name!r} needs exactly one source column")

    @classmethod
    def sum(cls, name: str, source: str | None = None) -> "Measure":
        return cls(name, "sum", (source or name,))

    @classmethod
    def count_distinct(cls, name: str, *sources: str) -> "Measure":
        return cls(name, "count_distinct", sources or (name,))


@dataclass(frozen=True)
class DimensionSchema:
    """Ordered dimensions + measures, with optional hierarchy chains (coarse to fine)."""

    dimensions: tuple[Dimension, ...]
    measures: tuple[Measure, ...]
    hierarchies: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        object.__setattr__(self, "measures", tuple(self.measures))
        object.__setattr__(self, "hierarchies", tuple(tuple(h) for h in self.hierarchies))
        dim_names = [d.name for d in self.dimensions]
        measure_names = [m.name for m in self.measures]
        all_names = dim_names + measure_names
        if len(set(all_names)) != len(all_names):
            raise SchemaError("dimension and measure names must be disjoint and unique")
        for chain in self.hierarchies:
            if len(set(chain)) != len(chain):
                raise SchemaError(f"hierarchy {chain} repeats a dimension")
            for name in chain:
                if name not in dim_names:
                    raise SchemaError(f"hierarchy references unknown dimension {name!r}")

    @property
    def dimension_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dimensions)

    @property
    def measure_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.measures)

    def dimension(self, name: str) -> Dimension:
        for d in self.dimensions:
            if d.name == name:
                return d
        raise SchemaError(f"unknown dimension {name!r}")

    def measure(self, name: str) -> Measure:
        for m in self.measures:
            if m.name == name:
                return m
        raise SchemaError(f"unknown measure {name!r}")

    def dim_index(self, name: str) -> int:
        for i, d in enumerate(self.dimensions):
            if d.name == name:
                return i
        raise SchemaError(f"unknown dimension {name!r}")

    def region_key(self, region: "Region") -> tuple:
        """Canonical sort key: bound dimensions in schema order, values as text."""
        items = sorted(((self.dim_index(d), format_value(v)) for d, v in region.items()))
        return tuple(items)

    def sort_regions(self, regions: Iterable["Region"]) -> list["Region"]:
        return sorted(regions, key=self.region_key)


class Region:
    """An immutable tuple of dimension=value bindings; the empty region is the population."""

    __slots__ = ("_items",)

    def __init__(self, bindings: Mapping[str, Any] | Iterable[tuple[str, Any]] = ()):
        if isinstance(bindings, Mapping):
            pairs = bindings.items()
        else:
            pairs = tuple(bindings)
        items = tuple(sorted(pairs))
        if len({d for d, _ in items}) != len(items):
            raise SchemaError("region binds a dimension more than once")
        self._items = items

    @property
    def degree(self) -> int:
        return len(self._items)

    @property
    def dims(self) -> tuple[str, ...]:
        return tuple(d for d, _ in self._items)

    def items(self) -> tuple[tuple[str, Any], ...]:
        return self._items

    def bindings(self) -> dict:
        return dict(self._items)

    def get(self, dim: str, default=None):
        for d, v in self._items:
            if d == dim:
                return v
        return default

    def __contains__(self, dim: str) -> bool:
        return any(d == dim for d, _ in self._items)

    def with_binding(self, dim: str, value) -> "Region":
        return Region(self._items + ((dim, value),))

    def __eq__(self, other):
        return isinstance(other, Region) and self._items == other._items

    def __hash__(self):
        return hash(self._items)

    def __repr__(self):
        if not self._items:
            return "Region([])"
        inner = ", ".join(f"{d}={format_value(v)}" for d, v in self._items)
        return f"Region({inner})"


EMPTY_REGION = Region()


def region_precedes(g1: Region, g2: Region) -> bool:
    """True iff g2's bindings are a subset of g1's (g1 is at least as fine-grained)."""
    b1 = dict(g1.items())
    return all(d in b1 and b1[d] == v for d, v in g2.items())


@dataclass(frozen=True)
class FeatureRequest:
    """Requested attribute (dimension) columns and metric (measure) columns."""

    attribute_features: tuple[str, ...] = ()
    metric_features: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "attribute_features", tuple(self.attribute_features))
        object.__setattr__(self, "metric_features", tuple(self.metric_features))
        for names, what in ((self.attribute_features, "attribute"), (self.metric_features, "metric")):
            if len(set(names)) != len(names):
                raise SchemaError(f"duplicate {what} feature in request")

    def validate(self, schema: DimensionSchema) -> None:
        for name in self.attribute_features:
            schema.dimension(name)
        for name in self.metric_features:
            schema.measure(name)


class FeatureFrame:
    """Grouped result table: distinct attribute tuples plus aggregated measures.

    Rows are sorted by attribute tuple so equal views compare equal.  Measure
    cells are numbers, or None for an absent-side sentinel in left joins.
    """

    __slots__ = ("attribute_names", "measure_names", "_rows")

    def __init__(self, attribute_names, measure_names, rows):
        self.attribute_names = tuple(attribute_names)
        self.measure_names = tuple(measure_names)
        rows = [(tuple(a), tuple(m)) for a, m in rows]
        rows.sort(key=lambda r: _row_sort_key(r[0]))
        if len({r[0] for r in rows}) != len(rows):
            raise SchemaError("feature frame attribute tuples are not distinct")
        for a, m in rows:
            if len(a) != len(self.attribute_names) or len(m) != len(self.measure_names):
                raise SchemaError("feature frame row width mismatch")
        self._rows = tuple(rows)

    @property
    def n_rows(self) -> int:
        return len(self._rows)

    def iter_rows(self) -> Iterator[tuple[tuple, tuple]]:
        return iter(self._rows)

    def attribute_column(self, name: str) -> tuple:
        i = self.attribute_names.index(name)
        return tuple(r[0][i] for r in self._rows)

    def measure_column(self, name: str) -> tuple:
        i = self.measure_names.index(name)
        return tuple(r[1][i] for r in self._rows)

    def value(self, measure: str | None = None):
        """The single aggregate of a one-row frame (grand-total views)."""
        if self.n_rows != 1:
            raise SchemaError(f"value() needs exactly one row, frame has {self.n_rows}")
        name = measure if measure is not None else self.measure_names[0]
        return self.measure_column(name)[0]

    def row_dicts(self) -> list[dict]:
        out = []
        for a, m in self._rows:
            d = dict(zip(self.attribute_names, a))
            d.update(zip(self.measure_names, m))
            out.append(d)
        return out

    def __eq__(self, other):
        return (
            isinstance(other, FeatureFrame)
            and self.attribute_names == other.attribute_names
            and self.measure_names == other.measure_names
            and self._rows == other._rows
        )

    def __hash__(self):
        return hash((self.attribute_names, self.measure_names, self._rows))

    def __repr__(self):
        return f"FeatureFrame({self.attribute_names}+{self.measure_names}, {self.n_rows} rows)"


class Table:
    """Immutable columnar base table."""

    __slots__ = ("columns", "n_rows")

    def __init__(self, columns: Mapping[str, Sequence]):
        cols = {name: tuple(values) for name, values in columns.items()}
        lengths = {len(v) for v in cols.values()}
        if len(lengths) > 1:
            raise SchemaError("table columns have unequal lengths")
        self.columns = cols
        self.n_rows = lengths.pop() if lengths else 0

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(self.columns)

    def column(self, name: str) -> tuple:
        try:
            return self.columns[name]
        except KeyError:
            raise SchemaError(f"unknown column {name!r}") from None

    def with_constant(self, name: str, value) -> "Table":
        if name in self.columns:
            raise SchemaError(f"column {name!r} already exists")
        cols = dict(self.columns)
        cols[name] = (value,) * self.n_rows
        return Table(cols)

    def subset(self, row_ids: Sequence[int]) -> "Table":
        return Table({name: [col[i] for i in row_ids] for name, col in self.columns.items()})

    @classmethod
    def from_rows(cls, names: Sequence[str], rows: Iterable[Sequence]) -> "Table":
        names = list(names)
        cols = {n: [] for n in names}
        for row in rows:
            if len(row) != len(names):
                raise SchemaError("row width does not match column names")
            for n, v in zip(names, row):
                cols[n].append(v)
        return cls(cols)

    @classmethod
    def from_csv(cls, path, schema: DimensionSchema, constants: Mapping[str, Any] | None = None) -> "Table":
        """Load a CSV, typing each column per the schema.

        Dimension columns are parsed per their domain (empty cell -> NULL).
        SUM sources are parsed as numbers (int when integral).  Any other
        column is kept as raw text so COUNT_DISTINCT can reference it.
        """
        dim_by_name = {d.name: d for d in schema.dimensions}
        sum_sources = {m.sources[0] for m in schema.measures if m.agg == "sum"}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty CSV") from None
            cols = {name: [] for name in header}
            for line_no, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise DataError(f"{path}:{line_no}: expected {len(header)} cells, got {len(row)}")
                for name, text in zip(header, row):
                    if name in dim_by_name:
                        cols[name].append(dim_by_name[name].parse(text))
                    elif name in sum_sources:
                        cols[name].append(_parse_number(name, text))
                    else:
                        cols[name].append(text)
        table = cls(cols)
        for name, value in (constants or {}).items():
            table = table.with_constant(name, value)
        return table


def _parse_number(name: str, text: str):
    if text == "":
        raise DataError(f"measure source {name!r}: empty cell")
    try:
        f = float(text)
    except ValueError:
        raise DataError(f"measure source {name!r}: {text!r} is not a number") from None
    return int(f) if f.is_integer() and "." not in text and "e" not in text.lower() else f


def filter_by_region(table: Table, region: Region) -> Table:
    """Rows of ``table`` matching every binding; the empty region keeps all rows."""
    cols = []
    for dim, value in region.items():
        cols.append((table.column(dim), value))
    keep = [
        i
        for i in range(table.n_rows)
        if all(col[i] is value or col[i] == value for col, value in cols)
    ]
    return table.subset(keep)


class RegionCursor(ABC):
    """A cube bound at one region: cheap views, child values, and refinement."""

    def __init__(self, cube: "AbstractCube", region: Region):
        self.cube = cube
        self.region = region

    @abstractmethod
    def view(self, request: FeatureRequest) -> FeatureFrame: ...

    @abstractmethod
    def values(self, dim: str) -> tuple: ...

    @abstractmethod
    def child(self, dim: str, value) -> "RegionCursor": ...


class _GenericCursor(RegionCursor):
    def view(self, request):
        return self.cube.view(self.region, request)

    def values(self, dim):
        return self.cube.region_values(self.region, dim)

    def child(self, dim, value):
        return self.cube.bind(self.region.with_binding(dim, value))


class AbstractCube(ABC):
    """The cube contract: a function (region, feature request) -> FeatureFrame."""

    @property
    @abstractmethod
    def schema(self) -> DimensionSchema: ...

    @abstractmethod
    def view(self, region: Region, request: FeatureRequest) -> FeatureFrame: ...

    def region_values(self, region: Region, dim: str) -> tuple:
        """Distinct values of ``dim`` observed inside ``region``, sorted."""
        frame = self.view(region, FeatureRequest((dim,), ()))
        return frame.attribute_column(dim)

    def bind(self, region: Region) -> RegionCursor:
        return _GenericCursor(self, region)

    def _check(self, region: Region, request: FeatureRequest) -> None:
        request.validate(self.schema)
        for dim in region.dims:
            self.schema.dimension(dim)


def cube_view(cube: AbstractCube, region: Region, request: FeatureRequest) -> FeatureFrame:
    """Evaluate the cube function at one region."""
    return cube.view(region, request)


class BaseTableGroupByCube(AbstractCube):
    """Cube computed on demand by filter + group-by + aggregate over a base table."""

    def __init__(self, table: Table, schema: DimensionSchema):
        for d in schema.dimensions:
            table.column(d.name)
        for m in schema.measures:
            for src in m.sources:
                table.column(src)
        self._table = table
        self._schema = schema
        # per-dimension posting lists: value -> sorted row ids
        self._postings: dict[str, dict[Any, tuple[int, ...]]] = {}
        for d in schema.dimensions:
            col = table.column(d.name)
            acc: dict[Any, list[int]] = {}
            for i, v in enumerate(col):
                acc.setdefault(v, []).append(i)
            self._postings[d.name] = {v: tuple(ids) for v, ids in acc.items()}

    @property
    def schema(self) -> DimensionSchema:
        return self._schema

    @property
    def table(self) -> Table:
        return self._table

    def _rows_for(self, region: Region) -> tuple[int, ...]:
        if region.degree == 0:
            return tuple(range(self._table.n_rows))
        postings = []
        for dim, value in region.items():
            self._schema.dimension(dim)
            postings.append(self._postings[dim].get(value, ()))
        postings.sort(key=len)
        rows = postings[0]
        for other in postings[1:]:
            members = set(other)
            rows = tuple(i for i in rows if i in members)
            if not rows:
                break
        return rows

    def _aggregate(self, row_ids: Sequence[int], request: FeatureRequest,
                   grand_total: bool) -> FeatureFrame:
        attrs = request.attribute_features
        measures = [self._schema.measure(m) for m in request.metric_features]
        attr_cols = [self._table.column(a) for a in attrs]
        groups: dict[tuple, list[int]] = {}
        if not attrs:
            # the root's grand total always exists (zero aggregates on an empty
            # table); a nonempty region filtered to zero rows has no groups
            if grand_total or row_ids:
                groups[()] = list(row_ids)
        else:
            for i in row_ids:
                key = tuple(col[i] for col in attr_cols)
                groups.setdefault(key, []).append(i)
        rows = []
        for key, ids in groups.items():
            vals = []
            for m in measures:
                if m.agg == "sum":
                    src = self._table.column(m.sources[0])
                    vals.append(sum(src[i] for i in ids))
                else:
                    src_cols = [self._table.column(s) for s in m.sources]
                    vals.append(len({tuple(col[i] for col in src_cols) for i in ids}))
            rows.append((key, tuple(vals)))
        return FeatureFrame(attrs, request.metric_features, rows)

    def view(self, region: Region, request: FeatureRequest) -> FeatureFrame:
        self._check(region, request)
        return self._aggregate(self._rows_for(region), request, region.degree == 0)

    def region_values(self, region: Region, dim: str) -> tuple:
        self._schema.dimension(dim)
        if region.degree == 0:
            return tuple(sorted(self._postings[dim], key=_value_sort_key))
        rows = self._rows_for(region)
        col = self._table.column(dim)
        return tuple(sorted({col[i] for i in rows}, key=_value_sort_key))

    def bind(self, region: Region) -> RegionCursor:
        return _TableCursor(self, region, self._rows_for(region))


class _TableCursor(RegionCursor):
    """Carries the region's row ids so refinement scans only the parent's rows."""

    def __init__(self, cube: BaseTableGroupByCube, region: Region, row_ids: tuple[int, ...]):
        super().__init__(cube, region)
        self.row_ids = row_ids

    def view(self, request):
        self.cube._check(self.region, request)
        return self.cube._aggregate(self.row_ids, request, self.region.degree == 0)

    def values(self, dim):
        self.cube.schema.dimension(dim)
        col = self.cube.table.column(dim)
        return tuple(sorted({col[i] for i in self.row_ids}, key=_value_sort_key))

    def child(self, dim, value):
        col = self.cube.table.column(dim)
        ids = tuple(i for i in self.row_ids if col[i] is value or col[i] == value)
        return _TableCursor(self.cube, self.region.with_binding(dim, value), ids)


class CellsetCube(AbstractCube):
    """Materialized cube: full-width cells (value or ANY per dimension) -> measure vector."""

    def __init__(self, schema: DimensionSchema, cells: Mapping[tuple, Mapping[str, Any]]):
        self._schema = schema
        width = len(schema.dimensions)
        norm: dict[tuple, dict[str, Any]] = {}
        for cell, values in cells.items():
            cell = tuple(cell)
            if len(cell) != width:
                raise SchemaError(f"cell {cell!r} width != {width}")
            norm[cell] = dict(values)
        self._cells = norm
        # mask index: frozenset of concrete dimension names -> cells
        self._by_mask: dict[frozenset, list[tuple]] = {}
        names = schema.dimension_names
        for cell in norm:
            mask = frozenset(names[i] for i, v in enumerate(cell) if v is not ANY)
            self._by_mask.setdefault(mask, []).append(cell)
        for cells_for_mask in self._by_mask.values():
            cells_for_mask.sort(key=lambda c: tuple(format_value(v) for v in c))

    @property
    def schema(self) -> DimensionSchema:
        return self._schema

    @property
    def cells(self) -> dict:
        return self._cells

    def cell_values(self, cell: tuple) -> dict:
        return self._cells[tuple(cell)]

    def view(self, region: Region, request: FeatureRequest) -> FeatureFrame:
        self._check(region, request)
        names = self._schema.dimension_names
        needed = frozenset(region.dims) | frozenset(request.attribute_features)
        rows = []
        bindings = region.bindings()
        for cell in self._by_mask.get(needed, ()):
            by_name = dict(zip(names, cell))
            if any(by_name[d] != v for d, v in bindings.items()):
                continue
            attrs = tuple(by_name[a] for a in request.attribute_features)
            vals = self._cells[cell]
            measures = []
            for m in request.metric_features:
                if m not in vals:
                    raise SchemaError(f"measure {m!r} not stored in cellset")
                measures.append(vals[m])
            rows.append((attrs, tuple(measures)))
        return FeatureFrame(request.attribute_features, request.metric_features, rows)

    def region_values(self, region: Region, dim: str) -> tuple:
        self._schema.dimension(dim)
        if dim in region:
            return (region.get(dim),)
        names = self._schema.dimension_names
        needed = frozenset(region.dims) | {dim}
        bindings = region.bindings()
        out = set()
        for cell in self._by_mask.get(needed, ()):
            by_name = dict(zip(names, cell))
            if any(by_name[d] != v for d, v in bindings.items()):
                continue
            out.add(by_name[dim])
        return tuple(sorted(out, key=_value_sort_key))


def build_cellset(cube: AbstractCube, dims: Sequence[str]) -> CellsetCube:
    """Materialize every grouping set over ``dims`` into a cellset.

    Only value combinations observed in the data are stored; for a group-by
    cube the all-ANY cell always exists (zero aggregates for an empty base
    table), while materializing a partial cellset preserves its holes.
    """
    dims = tuple(dims)
    for d in dims:
        cube.schema.dimension(d)
    sub_schema = DimensionSchema(
        tuple(d for d in cube.schema.dimensions if d.name in dims),
        cube.schema.measures,
        tuple(h for h in cube.schema.hierarchies if all(n in dims for n in h)),
    )
    ordered = sub_schema.dimension_names
    all_measures = FeatureRequest((), cube.schema.measure_names)
    cells: dict[tuple, dict[str, Any]] = {}
    for k in range(len(ordered) + 1):
        for subset in itertools.combinations(ordered, k):
            frame = cube.view(EMPTY_REGION, FeatureRequest(subset, all_measures.metric_features))
            for attrs, measures in frame.iter_rows():
                by_name = dict(zip(subset, attrs))
                cell = tuple(by_name.get(d, ANY) for d in ordered)
                cells[cell] = dict(zip(cube.schema.measure_names, measures))
    return CellsetCube(sub_schema, cells)


def schema_to_dict(schema: DimensionSchema) -> dict:
    """JSON-ready form of a schema (used by run configs and store manifests)."""
    return {
        "dimensions": [{"name": d.name, "domain": d.domain} for d in schema.dimensions],
        "measures": [
            {"name": m.name, "agg": m.agg, "sources": list(m.sources)} for m in schema.measures
        ],
        "hierarchies": [list(h) for h in schema.hierarchies],
    }


def schema_from_dict(data: Mapping) -> DimensionSchema:
    dims = tuple(Dimension(d["name"], d.get("domain", "string")) for d in data.get("dimensions", ()))
    measures = tuple(
        Measure(m["name"], m.get("agg", "sum"), tuple(m.get("sources", ()) or (m["name"],)))
        for m in data.get("measures", ())
    )
    hierarchies = tuple(tuple(h) for h in data.get("hierarchies", ()))
    return DimensionSchema(dims, measures, hierarchies)
