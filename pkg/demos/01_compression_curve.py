"""How the score compression shapes VQA scores before fusion.

The fused candidate score is  norm(cir) + lambda * sigma_k(vqa).  The
compression sigma_k maps 0 -> 0.5 and 1 -> 1 for every k, and squeezes
high VQA scores together so one mispredicted question cannot sink an
otherwise compatible candidate. Smaller k squeezes harder.

Run:  python demos/01_compression_curve.py
"""

import numpy as np

from vqarerank import sigma_k

KS = [0.1, 0.8375, 5.0]
XS = np.linspace(0.0, 1.0, 11)

print("sigma_k(x) for the operating-point k=0.8375 and two extremes\n")
header = "x     " + "".join(f"k={k:<10g}" for k in KS)
print(header)
print("-" * len(header))
for x in XS:
    row = f"{x:0.2f}  " + "".join(f"{sigma_k(float(x), k):<12.6f}" for k in KS)
    print(row)

print("\nFixed points hold for any k: sigma(0)=0.5, sigma(1)=1")
for k in (0.01, 0.8375, 100.0):
    print(f"  k={k:<8g} sigma(0)={sigma_k(0.0, k):.12f}  sigma(1)={sigma_k(1.0, k):.12f}")

# The squeeze in action: two candidates whose VQA scores differ by 0.1
# near the top of the range end up much closer after compression.
print("\nGap compression near the top (k=0.8375):")
for a, b in [(0.5, 0.6), (0.8, 0.9), (0.9, 1.0)]:
    gap_in = b - a
    gap_out = sigma_k(b, 0.8375) - sigma_k(a, 0.8375)
    print(f"  vqa {a:.1f} vs {b:.1f}: raw gap {gap_in:.2f} -> fused-side gap {gap_out:.4f}")
