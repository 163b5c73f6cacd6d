"""Batch extrinsic calibration between a spinning 3D LiDAR and a global pose sensor."""

__version__ = "0.1.0"
