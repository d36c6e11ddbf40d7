"""Point cloud geometry codec built on an overfitted neural volumetric field."""

from .codec import EncodeConfig, decode, encode
from .metrics import bpp, d1_psnr
from .pointcloud_io import PointCloud, read_ply, voxelize, write_ply

__version__ = "0.1.0"

__all__ = ["EncodeConfig", "PointCloud", "bpp", "d1_psnr", "decode", "encode", "read_ply",
           "voxelize", "write_ply"]
