"""Body-part volume toolkit: mesh volumes, voxel baseline, label codecs, metrics."""

__version__ = "0.1.0"
