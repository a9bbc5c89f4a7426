"""Joining two cubes on shared dimensions.

The LOCAL strategy defers all work: each view loads both sides' frames and
joins them as tables (one relational join per view).  The GLOBAL strategy
eagerly joins the two cellsets once; every later view is a lookup.  Both
strategies answer every (region, request) identically.

View semantics: each side is aggregated at its own granularity and the frames
are joined on the join dimensions that appear among the requested attributes.
Join dimensions left out of a request are pre-aggregated on both sides before
combining.  In a left join, rows without a right match carry ``None`` in
right measure columns (models must opt into handling that sentinel); since
such rows have no right-side values at all, they drop out of any view whose
region or attributes touch a right-only dimension.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .core import (
    ANY,
    NULL,
    AbstractCube,
    CellsetCube,
    DimensionSchema,
    FeatureFrame,
    FeatureRequest,
    Measure,
    Region,
    build_cellset,
)
from .errors import JoinError, RequestError, SchemaError


@dataclass(frozen=True)
class JoinSpec:
    """Shared key dimensions, per-side measure prefixes, and the join kind."""

    on: tuple[str, ...]
    left_prefix: str = "left"
    right_prefix: str = "right"
    kind: str = "inner"

    def __post_init__(self):
        object.__setattr__(self, "on", tuple(self.on))
        if not self.on:
            raise JoinError("join needs at least one join dimension")
        if self.kind not in ("inner", "left"):
            raise JoinError(f"unknown join kind {self.kind!r}")
        if not self.left_prefix or not self.right_prefix or self.left_prefix == self.right_prefix:
            raise JoinError("join sides need two distinct non-empty prefixes")


class JoinedCube(AbstractCube):
    """Two cubes melded on their join dimensions; strategy LOCAL or GLOBAL."""

    def __init__(self, left: AbstractCube, right: AbstractCube, spec: JoinSpec,
                 strategy: str = "local"):
        if strategy not in ("local", "global"):
            raise JoinError(f"unknown join strategy {strategy!r}")
        self.left = left
        self.right = right
        self.spec = spec
        self.strategy = strategy
        self.counters = {"local_view_joins": 0, "global_cellset_joins": 0}
        self._counter_lock = threading.Lock()

        left_schema, right_schema = left.schema, right.schema
        for name in spec.on:
            try:
                ld = left_schema.dimension(name)
                rd = right_schema.dimension(name)
            except SchemaError as exc:
                raise JoinError(f"join dimension {name!r} missing: {exc}") from None
            if ld.domain != rd.domain:
                raise JoinError(f"join dimension {name!r} has mismatched domains")
        self._join_dims = set(spec.on)
        left_only = [d for d in left_schema.dimensions if d.name not in self._join_dims]
        right_only = [d for d in right_schema.dimensions if d.name not in self._join_dims]
        overlap = {d.name for d in left_only} & {d.name for d in right_only}
        if overlap:
            raise JoinError(f"non-join dimensions appear on both sides: {sorted(overlap)}")
        self._left_dims = {d.name for d in left_schema.dimensions}
        self._right_dims = {d.name for d in right_schema.dimensions}
        self._right_only = {d.name for d in right_only}

        measures = []
        self._measure_map: dict[str, tuple[str, str]] = {}  # prefixed -> (side, original)
        for prefix, schema, side in ((spec.left_prefix, left_schema, "left"),
                                     (spec.right_prefix, right_schema, "right")):
            for m in schema.measures:
                name = f"{prefix}.{m.name}"
                measures.append(Measure(name, m.agg, m.sources))
                self._measure_map[name] = (side, m.name)
        merged_dims = tuple(left_schema.dimensions) + tuple(right_only)
        self._schema = DimensionSchema(merged_dims, tuple(measures))

        self._cellset: CellsetCube | None = None
        if strategy == "global":
            self._cellset = self._build_global_cellset()

    @property
    def schema(self) -> DimensionSchema:
        return self._schema

    def resolve_measure(self, name: str) -> str:
        """Map a requested measure name (prefixed or unambiguous) to its prefixed form."""
        if name in self._measure_map:
            return name
        hits = [full for full, (_, orig) in self._measure_map.items() if orig == name]
        if len(hits) == 1:
            return hits[0]
        if len(hits) > 1:
            raise RequestError(f"measure name {name!r} is ambiguous; use a side prefix")
        raise SchemaError(f"unknown measure {name!r}")

    def _canonical_request(self, request: FeatureRequest) -> FeatureRequest:
        metrics = tuple(self.resolve_measure(m) for m in request.metric_features)
        return FeatureRequest(request.attribute_features, metrics)

    def view(self, region: Region, request: FeatureRequest) -> FeatureFrame:
        request = self._canonical_request(request)
        self._check(region, request)
        if self.strategy == "global":
            return self._cellset.view(region, request)
        return self._local_view(region, request)

    def region_values(self, region: Region, dim: str) -> tuple:
        if self.strategy == "global":
            return self._cellset.region_values(region, dim)
        frame = self.view(region, FeatureRequest((dim,), ()))
        return frame.attribute_column(dim)

    # -- LOCAL ---------------------------------------------------------------

    def _side_inputs(self, region: Region, request: FeatureRequest, side: str):
        dims = self._left_dims if side == "left" else self._right_dims
        bindings = {d: v for d, v in region.items() if d in dims}
        attrs = tuple(a for a in request.attribute_features if a in dims)
        metrics = tuple(orig for m in request.metric_features
                        for s, orig in (self._measure_map[m],) if s == side)
        return Region(bindings), FeatureRequest(attrs, metrics)

    def _local_view(self, region: Region, request: FeatureRequest) -> FeatureFrame:
        left_region, left_request = self._side_inputs(region, request, "left")
        right_region, right_request = self._side_inputs(region, request, "right")
        left_frame = self.left.view(left_region, left_request)
        right_frame = self.right.view(right_region, right_request)
        with self._counter_lock:
            self.counters["local_view_joins"] += 1

        keys = tuple(a for a in request.attribute_features if a in self._join_dims)
        l_attr_idx = {a: i for i, a in enumerate(left_request.attribute_features)}
        r_attr_idx = {a: i for i, a in enumerate(right_request.attribute_features)}
        l_meas_idx = {m: i for i, m in enumerate(left_request.metric_features)}
        r_meas_idx = {m: i for i, m in enumerate(right_request.metric_features)}

        right_by_key: dict[tuple, list] = {}
        for attrs, measures in right_frame.iter_rows():
            key = tuple(attrs[r_attr_idx[k]] for k in keys)
            right_by_key.setdefault(key, []).append((attrs, measures))

        # unmatched left rows have no right-side values at all, so they drop out
        # of any view whose region or attributes touch a right-only dimension
        right_only_involved = (
            any(a in self._right_only for a in request.attribute_features)
            or any(d in self._right_only for d in region.dims)
        )
        rows = []
        for l_attrs, l_measures in left_frame.iter_rows():
            key = tuple(l_attrs[l_attr_idx[k]] for k in keys)
            matches = right_by_key.get(key, ())
            if not matches:
                if self.spec.kind != "left" or right_only_involved:
                    continue
                matches = (None,)
            for match in matches:
                out_attrs = []
                for a in request.attribute_features:
                    if a in l_attr_idx:
                        out_attrs.append(l_attrs[l_attr_idx[a]])
                    elif match is not None:
                        out_attrs.append(match[0][r_attr_idx[a]])
                    else:
                        out_attrs.append(NULL)
                out_measures = []
                for m in request.metric_features:
                    side, orig = self._measure_map[m]
                    if side == "left":
                        out_measures.append(l_measures[l_meas_idx[orig]])
                    elif match is not None:
                        out_measures.append(match[1][r_meas_idx[orig]])
                    else:
                        out_measures.append(None)
                rows.append((tuple(out_attrs), tuple(out_measures)))
        return FeatureFrame(request.attribute_features, request.metric_features, rows)

    # -- GLOBAL --------------------------------------------------------------

    def _build_global_cellset(self) -> CellsetCube:
        left_cs = _as_cellset(self.left)
        right_cs = _as_cellset(self.right)
        self.counters["global_cellset_joins"] += 1

        l_names = left_cs.schema.dimension_names
        r_names = right_cs.schema.dimension_names
        l_join_pos = [l_names.index(d) for d in self.spec.on]
        r_join_pos = [r_names.index(d) for d in self.spec.on]
        merged_names = self._schema.dimension_names
        right_only_names = [d for d in r_names if d in self._right_only]
        r_only_pos = [r_names.index(d) for d in right_only_names]

        right_by_pattern: dict[tuple, list[tuple]] = {}
        for cell in right_cs.cells:
            pattern = tuple(cell[i] for i in r_join_pos)
            right_by_pattern.setdefault(pattern, []).append(cell)

        cells: dict[tuple, dict] = {}
        right_measure_names = [m.name for m in self.right.schema.measures]
        left_measure_names = [m.name for m in self.left.schema.measures]

        def merged_values(l_cell, r_cell):
            by_name = dict(zip(l_names, l_cell))
            if r_cell is not None:
                for d, v in zip(right_only_names, (r_cell[i] for i in r_only_pos)):
                    by_name[d] = v
            else:
                for d in right_only_names:
                    by_name[d] = ANY
            return tuple(by_name[d] for d in merged_names)

        for l_cell, l_vals in left_cs.cells.items():
            pattern = tuple(l_cell[i] for i in l_join_pos)
            matches = right_by_pattern.get(pattern, ())
            if not matches:
                if self.spec.kind != "left":
                    continue
                merged = merged_values(l_cell, None)
                values = {f"{self.spec.left_prefix}.{m}": l_vals[m] for m in left_measure_names}
                values.update({f"{self.spec.right_prefix}.{m}": None for m in right_measure_names})
                cells[merged] = values
                continue
            for r_cell in matches:
                merged = merged_values(l_cell, r_cell)
                r_vals = right_cs.cell_values(r_cell)
                values = {f"{self.spec.left_prefix}.{m}": l_vals[m] for m in left_measure_names}
                values.update({f"{self.spec.right_prefix}.{m}": r_vals[m] for m in right_measure_names})
                cells[merged] = values
        return CellsetCube(self._schema, cells)

    def to_cellset(self) -> CellsetCube:
        """Materialize the joined cube (one cellset join for GLOBAL, one view per mask for LOCAL)."""
        if self.strategy == "global":
            return self._cellset
        import itertools

        names = self._schema.dimension_names
        all_measures = tuple(m.name for m in self._schema.measures)
        cells: dict[tuple, dict] = {}
        for k in range(len(names) + 1):
            for subset in itertools.combinations(names, k):
                frame = self._local_view(Region(), FeatureRequest(subset, all_measures))
                for attrs, measures in frame.iter_rows():
                    by_name = dict(zip(subset, attrs))
                    cell = tuple(by_name.get(d, ANY) for d in names)
                    cells[cell] = dict(zip(all_measures, measures))
        return CellsetCube(self._schema, cells)


def _as_cellset(cube: AbstractCube) -> CellsetCube:
    if isinstance(cube, CellsetCube):
        return cube
    to_cellset = getattr(cube, "to_cellset", None)
    if to_cellset is not None:
        return to_cellset()
    return build_cellset(cube, cube.schema.dimension_names)


def join_cubes(left: AbstractCube, right: AbstractCube, spec: JoinSpec,
               strategy: str = "local") -> JoinedCube:
    """Meld two cubes into one; LOCAL defers all work, GLOBAL joins cellsets now."""
    return JoinedCube(left, right, spec, strategy)


def joined_view(joined: JoinedCube, region: Region, request: FeatureRequest) -> FeatureFrame:
    """One view of a joined cube (strategy-independent by construction)."""
    return joined.view(region, request)
