"""basin-metric-lab: basin rasters, backward-orbit trees, and distance bounds
for rational maps on the Riemann sphere."""

__version__ = "0.1.0"

FORMAT_HEADER = "basin-metric-lab v1"
