"""Flows restricted to uniform measures toward delta_0 (Fig. 3)."""
import numpy as np
from _common import parse_out, write

from mmdflow import svg
from mmdflow.energy import DISTANCE
from mmdflow.measure import dirac
from mmdflow.restricted import UniformParam, landscape_grid, s2_flow

STARTS = [(-1.0, 0.0), (1.5, 0.2), (-1.8, 1.0), (0.5, 1.5), (1.8, 1.2), (-0.3, 1.8)]
TIMES = (0.1, 0.25, 0.5, 0.75, 1.0)


def main() -> None:
    out = parse_out("results/fig3", __doc__)
    nu = dirac(0.0)
    ms, ss, F = landscape_grid(nu, DISTANCE, (-2, 2), (0, 2), 81)
    left = svg.Panel((-2, 2), (0, 2), width=360, height=300, title="F(m, sigma), nu = delta_0")
    left.axes(xlabel="m", ylabel="sigma")
    left.contours(ms, ss, F, np.linspace(F.min(), F.max(), 16)[1:-1])
    rows = []
    for m0, s0 in STARTS:
        tr = s2_flow(UniformParam(m0, s0), nu, DISTANCE, 4.0, 1e-3, record_every=10)
        y = np.array(tr.states)
        left.polyline(y[:, 0], y[:, 1], color="black")
        rows += [f"{m0:g},{s0:g},{t:.6g},{a:.12g},{b:.12g}" for t, (a, b) in zip(tr.times, y)]
    left.marker(0.0, 0.0, "#d03030", "min")

    tr = s2_flow(UniformParam(-1.0, 0.0), nu, DISTANCE, 1.0, 1e-3)
    snaps = [(t, UniformParam(*tr.state_at(t)).measure()) for t in TIMES]
    for t, mu in snaps:
        print(f"t={t:g}: atoms={mu.atoms} uniforms={mu.uniforms}")
    write(out, "s2_flows.csv", "m0,sigma0,t,m,sigma\n" + "\n".join(rows) + "\n")
    write(out, "fig3_left.svg", svg.render([left]))
    write(out, "fig3_right.svg", svg.density_panels(snaps, xlim=(-1.2, 0.2)))


if __name__ == "__main__":
    main()
