"""Independent reference implementations used as test oracles.

These are deliberately naive (exact rationals, explicit loops) and share no
code with the package.
"""

import math
from fractions import Fraction


def enumerate_quantile(scores, masses, level):
    """Smallest score whose cumulative mass reaches ``level``; masses exact.

    ``scores`` are the finite scores (any order); ``masses`` has one extra
    trailing entry for the +inf point.
    """
    pairs = sorted(zip(scores, masses[:-1]), key=lambda p: p[0])
    pairs.append((math.inf, masses[-1]))
    total = Fraction(0)
    for value, mass in pairs:
        total += mass
        if total >= level:
            return value
    return math.inf


def vanilla_by_rank(scores, alpha: Fraction):
    """ceil((1 - alpha)(n + 1))-th smallest, or +inf past the end."""
    n = len(scores)
    k = math.ceil((1 - alpha) * (n + 1))
    ordered = sorted(scores)
    return ordered[k - 1] if k <= n else math.inf


def hand_q(dnn, ctx, y, lam=(1.0, 0.1, 3000.0)):
    """Objective from the closed-form model with default power/contention numbers."""
    bw, su, ug, fg, uc, fc, ci = ctx
    edge_scale = (921.6 / fg) * (1 + 1.0 * ug + 0.5 * uc)
    t_e = sum(layer.base_edge_latency for layer in dnn.layers[:y]) * edge_scale
    t_t = (dnn.input_size if y == 0 else dnn.layers[y - 1].output_size) / bw
    t_s = sum(layer.base_server_latency for layer in dnn.layers[y:]) * (1 + 1.0 * su)
    p_edge = max(1.8 + 1.5 * uc + 0.001 * (fc - 1479.0), 0) + max(3.5 + 2.5 * ug + 0.004 * (fg - 921.6), 0) + 1.2
    e_e = p_edge * t_e
    energy = e_e + 1.5 * t_t + (180.0 + 120.0 * su) * t_s
    carbon = energy / 3.6e6 * ci
    return lam[0] * (t_e + t_t + t_s) + lam[1] * e_e + lam[2] * carbon
