#!/usr/bin/env python3
# Interval width as a function of the truncation size for the embedded
# queue.  The width shrinks geometrically once A covers the bulk of the
# stationary mass, then flattens at solver precision.

import math

from stattrunc.config import build_certificate, build_chain, build_reward, parse_config

from stattrunc import TruncationProblem, run_pipeline

BASE = {"model": "gm1", "model_params": {"c": 2.01}, "z": 0, "K_max": 200,
        "a_values": [1], "r_spec": "identity", "h_mode": "paper_literal"}


def main() -> None:
    print(f"{'a':>6} {'lower':>16} {'upper':>16} {'width':>12} {'digits':>7}")
    for a in (300, 500, 700, 1000, 1500, 2000, 3000, 5000):
        cfg = parse_config({**BASE, "a_values": [a]})
        chain = build_chain(cfg)
        r = build_reward(cfg)
        K = range(cfg.K_max + 1)
        cert = build_certificate(cfg, chain, a, K, r)
        prob = TruncationProblem(chain=chain, A=range(a + 1), z=0, K=K, r=r)
        rep = run_pipeline(prob, cert)
        lo, hi = rep.interval
        width = hi - lo
        digits = -math.log10(width / rep.pi_tilde_r) if width > 0 else float("inf")
        print(f"{a:>6} {lo:>16.9f} {hi:>16.9f} {width:>12.3e} {digits:>7.1f}")


if __name__ == "__main__":
    main()
