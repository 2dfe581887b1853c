"""
Runtime against resolution
==========================

One full transfer is timed at 128, 256 and 512 pixels square. Absolute
seconds depend entirely on the machine; the shape of the curve is the
interesting part. Steps are cut to 5 here so the script finishes quickly.
"""

from hrstyle.evaluation import DEFAULT_LADDER, run_benchmark
from hrstyle.extractor import FeatureExtractor

fx = FeatureExtractor.untrained(seed=0)
report = run_benchmark(DEFAULT_LADDER, steps=5, fx=fx)
print(report.table())

# %%
# Fixed overheads blur the smallest size, but from 256 upward the cost
# tracks pixel count, since every convolution in both networks runs at full
# or fractional resolution.
base = report.rows[0].wall_seconds
for r in report.rows:
    h, w = r.resolution
    print(f"{h}x{w}: {r.wall_seconds / base:5.1f}x the 128x128 time, {h * w / 128**2:4.0f}x the pixels")
