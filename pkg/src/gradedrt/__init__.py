"""RT0 interpolation and projection on beta-graded anisotropic meshes."""
__version__ = "0.1.0"
