#!/usr/bin/env python3
"""Regenerate the binary depth-map fixtures (constant 2.0 m, 416x416)."""

from pathlib import Path

from aquafeed.biometrics import DepthMap
from aquafeed.detections import write_depth_map

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def main():
    depth = DepthMap.constant(416, 416, 2.0)
    data = write_depth_map(depth)
    for name in ("depth_a.dpth", "depth_b.dpth"):
        (FIXTURES / name).write_bytes(data)
        print(f"wrote {FIXTURES / name} ({len(data)} bytes)")


if __name__ == "__main__":
    main()
