"""Closed-form flow from delta_{-1} to delta_0, density snapshots (Fig. 1)."""
from _common import parse_out, write

from mmdflow import svg
from mmdflow.export import pieces_csv
from mmdflow.flow import closed_form_flow_to_dirac
from mmdflow.measure import dirac, pushforward_from_quantile, quantile

TIMES = (0.1, 0.25, 0.5, 0.75, 0.9, 1.0)


def main() -> None:
    out = parse_out("results/fig1", __doc__)
    q0 = quantile(dirac(-1.0))
    snaps = [(t, pushforward_from_quantile(closed_form_flow_to_dirac(q0, 0.0, t))) for t in TIMES]
    for t, mu in snaps:
        print(f"t={t:g}: atoms={mu.atoms} uniforms={mu.uniforms}")
    write(out, "pieces.csv", pieces_csv(snaps))
    write(out, "fig1.svg", svg.density_panels(snaps, xlim=(-1.2, 0.2)))


if __name__ == "__main__":
    main()
