"""Landscapes of the restricted energy for nu = uniform(-1, 1), both kernels (Fig. 4)."""
import numpy as np
from _common import parse_out, write

from mmdflow import svg
from mmdflow.cli import find_saddle
from mmdflow.energy import DISTANCE, SMOOTH
from mmdflow.export import landscape_csv
from mmdflow.measure import uniform
from mmdflow.restricted import UniformParam, landscape_grid, s2_flow

STARTS = [(-1.5, 0.0), (1.5, 0.0), (0.8, 0.0), (-1.8, 1.5), (1.8, 1.6), (0.2, 1.9)]


def panel(nu, k, left):
    ms, ss, F = landscape_grid(nu, k, (-2, 2), (0, 2), 81)
    p = svg.Panel((-2, 2), (0, 2), width=360, height=300, left=left, title=f"{k.name} kernel")
    p.axes(xlabel="m", ylabel="sigma")
    p.contours(ms, ss, F, np.linspace(F.min(), F.max(), 16)[1:-1])
    for m0, s0 in STARTS:
        tr = s2_flow(UniformParam(m0, s0), nu, k, 10.0, 1e-2)
        y = np.array(tr.states)
        p.polyline(y[:, 0], y[:, 1], color="black")
        print(f"{k.name}: ({m0:g}, {s0:g}) -> ({y[-1, 0]:.4g}, {y[-1, 1]:.4g})")
    j, i = np.unravel_index(np.argmin(F), F.shape)
    p.marker(ms[i], ss[j], "#d03030", "min")
    saddle = find_saddle(nu, k)
    if saddle is not None:
        m0, g, eig = saddle
        p.marker(m0, 0.0, "#3050d0", "saddle")
        print(f"{k.name}: saddle at m={m0:g}, |grad|={np.linalg.norm(g):.1e}, eigenvalues={eig}")
    return p, landscape_csv(ms, ss, F)


def main() -> None:
    out = parse_out("results/fig4", __doc__)
    nu = uniform(-1.0, 1.0)
    left, csv_d = panel(nu, DISTANCE, 50)
    right, csv_s = panel(nu, SMOOTH, 470)
    write(out, "landscape_distance.csv", csv_d)
    write(out, "landscape_smooth.csv", csv_s)
    write(out, "fig4.svg", svg.render([left, right]))


if __name__ == "__main__":
    main()
