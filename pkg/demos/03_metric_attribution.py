"""Attributing a population metric change to regions, the principled way.

A cost-per-click style density metric rho = Revenue / Clicks moves between a
control and a test segment.  Each region's score integrates the metric
model's partial derivatives along the straight control-to-test path, which
buys two guarantees checked below: disjoint regions add, and any partition of
the population sums exactly to the top-level change.
"""

from cubecrawl import (
    AttributionModel,
    BaseTableGroupByCube,
    CrawlSpec,
    Dimension,
    DimensionSchema,
    EntityMetrics,
    Measure,
    SegmentedMetrics,
    Table,
    attribute_density,
    churn_decompose,
    density_model,
    numeric_path_ras,
    top_down_crawl,
)

rows = [
    ("Pixel", "Chrome", False, 10, 5),
    ("Pixel", "Safari", False, 20, 10),
    ("iPhone", "Safari", False, 30, 15),
    ("Pixel", "Chrome", True, 15, 6),
    ("Pixel", "Safari", True, 25, 10),
    ("iPhone", "Safari", True, 25, 15),
]
table = Table.from_rows(["Device", "Browser", "is_test", "Revenue", "Clicks"], rows)
schema = DimensionSchema(
    (Dimension("Device"), Dimension("Browser"), Dimension("is_test", "boolean")),
    (Measure.sum("Revenue"), Measure.sum("Clicks")),
)
cube = BaseTableGroupByCube(table, schema)

pop = SegmentedMetrics(w_p_c=60, w_p_t=65, s_p_c=30, s_p_t=31)
print("population density change C_rho =", f"{pop.population_density_change():+.6f}")

print("\n== attribution as a region analysis model in a crawl ==")
spec = CrawlSpec(
    models=[AttributionModel("Revenue", "Clicks")],
    grouping_sets=[["Device", "Browser"]],
)
result = top_down_crawl(cube, spec)
total = 0.0
for region, signals in result.sorted_records():
    total += signals["ras"]
    print(f"  {region}: ras={signals['ras']:+.6f} "
          f"(numerator {signals['numerator_part']:+.6f}, "
          f"denominator {signals['denominator_part']:+.6f})")
print(f"partition total {total:+.6f} == C_rho "
      f"(error {abs(total - pop.population_density_change()):.2e})")

print("\n== closed form vs numeric path integration ==")
m = SegmentedMetrics(w_r_c=10, w_r_t=15, s_r_c=5, s_r_t=6,
                     w_p_c=60, w_p_t=65, s_p_c=30, s_p_t=31)
closed = attribute_density(m)
numeric = numeric_path_ras(density_model(m), coords=(0, 1))
print(f"closed  {closed.ras:.15f}")
print(f"numeric {numeric.ras:.15f}  (64-node Gauss-Legendre)")

print("\n== additivity over disjoint regions ==")
m2 = SegmentedMetrics(w_r_c=20, w_r_t=25, s_r_c=10, s_r_t=10,
                      w_p_c=60, w_p_t=65, s_p_c=30, s_p_t=31)
union = m.union(m2)
print(f"ras(a)+ras(b) = {attribute_density(m).ras + attribute_density(m2).ras:+.9f}")
print(f"ras(a u b)    = {attribute_density(union).ras:+.9f}")

print("\n== churn: control-only / persistent / test-only traffic ==")
entities = [
    EntityMetrics("site-kept", w_c=8, w_t=12, s_c=4, s_t=5),
    EntityMetrics("site-lost", w_c=2, w_t=0, s_c=1, s_t=0),
    EntityMetrics("site-new", w_c=0, w_t=3, s_c=0, s_t=1),
]
region = SegmentedMetrics(w_r_c=10, w_r_t=15, s_r_c=5, s_r_t=6,
                          w_p_c=60, w_p_t=65, s_p_c=30, s_p_t=31)
churn = churn_decompose(region, entities)
for label, part in churn.as_dict().items():
    print(f"  {label}: {part.ras:+.6f}")
print(f"  sum {churn.total():+.6f} == region score {attribute_density(region).ras:+.6f}")
