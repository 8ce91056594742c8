"""Boundary-emphasized loss maps, soft skeletons, and airway-tree
topology metrics on dense 3D voxel grids."""

__version__ = "0.1.0"
