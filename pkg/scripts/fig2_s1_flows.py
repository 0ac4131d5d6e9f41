"""Flows restricted to Dirac measures for nu = delta_0 and nu = uniform(-1, 1) (Fig. 2)."""
import numpy as np
from _common import parse_out, write

from mmdflow import svg
from mmdflow.measure import dirac, uniform
from mmdflow.restricted import s1_flow

STARTS = np.linspace(-2, 2, 9)


def panel(nu, title, left, band=None):
    p = svg.Panel((0.0, 3.0), (-2.1, 2.1), width=300, left=left, title=title)
    p.axes(xlabel="t", ylabel="x")
    if band is not None:
        p.filled([0.0, 3.0], [band[1]] * 2, opacity=0.15)
        p.filled([0.0, 3.0], [band[0]] * 2, opacity=0.15)
    rows = []
    for x0 in STARTS:
        tr = s1_flow(float(x0), nu, 3.0, 1e-3, record_every=10)
        x = np.array(tr.states)[:, 0]
        p.polyline(tr.times, x, color="black")
        rows += [f"{x0:g},{t:.6g},{v:.12g}" for t, v in zip(tr.times, x)]
    return p, rows


def main() -> None:
    out = parse_out("results/fig2", __doc__)
    left, rows_l = panel(dirac(0.0), "nu = delta_0", 50)
    right, rows_r = panel(uniform(-1.0, 1.0), "nu = uniform(-1, 1)", 420, band=(-1.0, 1.0))
    write(out, "s1_dirac.csv", "x0,t,x\n" + "\n".join(rows_l) + "\n")
    write(out, "s1_uniform.csv", "x0,t,x\n" + "\n".join(rows_r) + "\n")
    write(out, "fig2.svg", svg.render([left, right]))


if __name__ == "__main__":
    main()
