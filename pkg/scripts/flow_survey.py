"""Survey degree growth and splitting types along one flow step.

Draws graded instances from the corpus boxes, transforms each once with a
trivial supplied filtration, and tabulates input degree, output degree, and
the output splitting type.  Degree must scale by exactly p every time; the
script recounts that on top of the library's own assertion.
"""

import argparse
import collections
import time

from hdflow.corpus import CorpusParams, generate
from hdflow.flow import FlowPolicy, flow_step
from hdflow.graded import HodgeFiltration
from hdflow.bundles import Bundle
from hdflow.curves import AffineLine
from hdflow.ringmath import Zmod


def trivial_policy(rank, domain):
    fil = HodgeFiltration(Bundle.free(AffineLine(domain), rank), ())
    return FlowPolicy(rule="supplied", filtrations=(fil,))


def boxes_for(p):
    out = [(1, 0), (2, 0), (2, 1), (3, 1), (4, 1)]
    if p >= 5:
        out += [(3, 2), (4, 3)]
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, default=3, choices=(3, 5, 7))
    ap.add_argument("--count", type=int, default=20, help="instances per box")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    d = Zmod(args.p, 1)
    t0 = time.monotonic()
    by_degree = collections.Counter()
    total = 0
    print("p=%d  %d instances per box" % (args.p, args.count))
    print("%-12s %8s %8s %8s" % ("box (r,w)", "deg in", "deg out", "ratio"))
    for rank, weight in boxes_for(args.p):
        params = CorpusParams(
            p=args.p, rank=rank, weight=weight, count=args.count,
            seed=args.seed + 100 * rank + weight,
        )
        policy = trivial_policy(rank, d)
        for G in generate(params):
            _, _, nxt = flow_step(G, policy)
            din, dout = G.degree(), nxt.degree()
            assert dout == args.p * din
            by_degree[din] += 1
            total += 1
        print("%-12s %8d %8d %8d" % ((rank, weight), din, dout, args.p))
    dt = time.monotonic() - t0
    print("%d steps in %.2f s (%.1f ms each)" % (total, dt, 1000 * dt / total))
    spread = sorted(by_degree.items())
    print("input degree spread: %s" % (spread,))


if __name__ == "__main__":
    main()
