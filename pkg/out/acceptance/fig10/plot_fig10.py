"""Plot helper for the fig10 experiment; reads summary.csv."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("summary.csv")))
series = defaultdict(list)
for row in rows:
    series[tuple(row[k] for k in ('window', 'los_ratio'))].append(
        (float(row['gap']), float(row['success_rate'])))

plt.figure(figsize=(6, 4))
for key, points in series.items():
    points.sort()
    plt.plot([p[0] for p in points], [p[1] for p in points],
             marker="o", label=" ".join(str(k) for k in key))
plt.xlabel('gap')
plt.ylabel('success_rate')
plt.yscale('linear')
plt.grid(True, alpha=0.4)
plt.legend()
plt.tight_layout()
plt.savefig("plot_fig10.png", dpi=200)
print("wrote plot_fig10.png")
