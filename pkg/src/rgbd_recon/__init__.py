"""Offline RGB-D reconstruction pipeline.

Takes a directory of color/depth frame pairs, estimates camera motion with
dense RGB-D odometry over sliding windows, fuses the windows into fragments,
aligns the fragments with point-to-plane ICP plus a global pose graph, and
writes the merged colored point cloud as a PCD file.
"""

__version__ = "0.1.0"
