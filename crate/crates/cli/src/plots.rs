//! Small matplotlib scripts written next to the CSV files they plot.

/// Mean prompted-emotion probability and entropy against prefix length, one line per method.
pub fn trajectory_script(csv_name: &str) -> String {
    format!(
        r#"import csv
import collections
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("{csv_name}")))
series = collections.defaultdict(list)
for r in rows:
    series[r["method"]].append((int(r["m"]), float(r["p_prompted"]), float(r["entropy"])))

fig, (ax_p, ax_h) = plt.subplots(1, 2, figsize=(9, 3.5))
for method, points in sorted(series.items()):
    points.sort()
    ms = [p[0] for p in points]
    ax_p.plot(ms, [p[1] for p in points], marker="o", label=method)
    ax_h.plot(ms, [p[2] for p in points], marker="o", label=method)
ax_p.set_xlabel("sentences")
ax_p.set_ylabel("p(prompted emotion)")
ax_h.set_xlabel("sentences")
ax_h.set_ylabel("entropy (nats)")
ax_p.legend()
fig.tight_layout()
fig.savefig("trajectory.png", dpi=150)
"#
    )
}

/// Kappa against k, one line per method.
pub fn curve_script(csv_name: &str) -> String {
    format!(
        r#"import csv
import collections
import matplotlib.pyplot as plt

series = collections.defaultdict(list)
for r in csv.DictReader(open("{csv_name}")):
    if r["kappa"]:
        series[r["method"]].append((int(r["k"]), float(r["kappa"])))

fig, ax = plt.subplots(figsize=(5, 3.5))
for method, points in sorted(series.items()):
    points.sort()
    ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=method)
ax.set_xlabel("k best chains per event")
ax.set_ylabel("Fleiss' kappa")
ax.legend()
fig.tight_layout()
fig.savefig("kappa_curve.png", dpi=150)
"#
    )
}
