#!/usr/bin/env python3
"""Per-layer multiply-accumulate accounting for the fusion network.

Prints the full layer table at a small resolution, then shows that the
total scales exactly linearly with spatial area.
"""

from ihdr.fusion.macs import count_macs
from ihdr.fusion.network import FusionModel

model = FusionModel.init()
print(f"toy model: {model.param_count():,} parameters\n")

report = count_macs(model, 64, 64)
print("per-layer MACs at 64x64:\n")
print(report.table())

print("\narea scaling of the total:")
for h, w in ((64, 64), (128, 128), (256, 256), (1000, 1500)):
    total = count_macs(model, h, w).total
    print(f"  {h:>5} x {w:<5} -> {total / 1e9:10.4f} GMACs "
          f"({total / report.total:.1f}x the 64x64 cost)")
