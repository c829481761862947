"""cartogen: controllable map-tile generation at desk scale.

Vector scenes rasterize into per-pixel class-label control images that
condition a small diffusion generator; tiles are assembled into sheets,
scored, post-processed, and served over a CLI and HTTP API.
"""

__version__ = "0.1.0"
