"""Flux space dimension of the two-field examples, with rank diagnostics."""
from fluxframe import corpus as K
from fluxframe import flux as X
from fluxframe.errors import NonGeneric
from fluxframe.geometry import PartialFrame
from fluxframe.exprlang import parse


def probe(name, pf):
    try:
        r = X.flux_dimension_report(pf)
    except NonGeneric as e:
        print(f"{name:24s} NonGeneric ({e})")
        return
    sv = ", ".join(f"{s:.1e}" for s in r.singular_values)
    print(f"{name:24s} dim {r.dimension}  rank {r.rank}  ranks by round {r.ranks_by_round}  sv [{sv}]")


def main():
    for name in ("dim0", "dim1", "dim2", "dim3", "dim4a", "dim4b", "nomist"):
        case = K.get(name)
        pf = case.partial_frame()
        probe(name, pf)
        probe(name + " swapped", PartialFrame([pf[1], pf[0]], pf.basepoint))
        alpha = parse("2 + u^2", case.coords)
        probe(name + " rescaled", PartialFrame([pf[0].scale(alpha), pf[1]], pf.basepoint))


if __name__ == "__main__":
    main()
