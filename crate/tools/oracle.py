"""Direct evaluation of the estimator formulas on small fixed trials.

Writes crates/core/tests/data/oracle.json. Shares no code with the Rust
crates; every quantity is computed straight from its defining expression.
"""
import json
import math
import random
from pathlib import Path


def expit(x):
    return 1.0 / (1.0 + math.exp(-x))


LINKS = {
    "identity": (lambda m: m, lambda m: 1.0),
    "logit": (lambda m: math.log(m / (1 - m)), lambda m: 1.0 / (m * (1 - m))),
    "log": (lambda m: math.log(m), lambda m: 1.0 / m),
}

MODEL = {"m1": [-0.5, 0.8, -0.3], "m0": [-1.0, 0.2, 0.5]}


def m(arm, w):
    b = MODEL["m1" if arm == 1 else "m0"]
    return expit(b[0] + b[1] * w[0] + b[2] * w[1])


def propensity(mech, w):
    if mech["kind"] == "fixed":
        return mech["pi"]
    b = mech["coefficients"]
    return expit(b[0] + b[1] * w[mech["index"]])


def draw_stage(rng, stage, n, mech):
    out = []
    for _ in range(n):
        w = [round(rng.gauss(0, 1), 3), round(rng.gauss(0, 1), 3)]
        a = 1 if rng.random() < propensity(mech, w) else 0
        y = 1.0 if rng.random() < m(a, w) else 0.0
        out.append({"stage": stage, "w": w, "a": a, "y": y})
    # both arms must be present in every stage
    out[0]["a"], out[1]["a"] = 1, 0
    return out


def mean(xs):
    return sum(xs) / len(xs)


def var(xs):
    mu = mean(xs)
    return sum((x - mu) ** 2 for x in xs) / (len(xs) - 1)


def hajek(records, mech, arm):
    num = den = 0.0
    for r in records:
        if r["a"] != arm:
            continue
        p = propensity(mech, r["w"])
        wt = 1.0 / (p if arm == 1 else 1 - p)
        num += wt * r["y"]
        den += wt
    return num / den


def group_mean(records, arm):
    return mean([r["y"] for r in records if r["a"] == arm])


def c_fn(link, mu1, mu0, eta, mech):
    _, d = LINKS[link]
    g1, g0 = d(mu1), d(mu0)

    def c(w):
        p = propensity(mech, w)
        return eta * (g1 * (m(1, w) - mu1) / p + g0 * (m(0, w) - mu0) / (1 - p))

    return c


def augmented(stages, mechs, link, theta, mu1, mu0):
    """Two-stage CIR: g(theta mu1^1 + (1-theta) mu1^2) - g(...) - sum_s mean_s[(A - pi_s) b_s(W)]."""
    g, _ = LINKS[link]
    weights = [theta, 1 - theta]
    m1 = [group_mean(s, 1) for s in stages]
    m0 = [group_mean(s, 0) for s in stages]
    val = g(sum(e * x for e, x in zip(weights, m1))) - g(sum(e * x for e, x in zip(weights, m0)))
    for s, mech, eta in zip(stages, mechs, weights):
        b = c_fn(link, mu1, mu0, eta, mech)
        val -= mean([(r["a"] - mech["pi"]) * b(r["w"]) for r in s])
    return val


def aipw(stages, mechs, link, weights, mu1, mu0):
    g, _ = LINKS[link]
    m1 = [hajek(s, mech, 1) for s, mech in zip(stages, mechs)]
    m0 = [hajek(s, mech, 0) for s, mech in zip(stages, mechs)]
    val = g(sum(e * x for e, x in zip(weights, m1))) - g(sum(e * x for e, x in zip(weights, m0)))
    for s, mech, eta in zip(stages, mechs, weights):
        c = c_fn(link, mu1, mu0, eta, mech)
        val -= mean([(r["a"] - propensity(mech, r["w"])) * c(r["w"]) for r in s])
    return val


def stage_var(records, mech, link, mu1, mu0):
    _, d = LINKS[link]
    g1, g0 = d(mu1), d(mu0)
    terms = []
    for r in records:
        a, y, w = r["a"], r["y"], r["w"]
        p = propensity(mech, w)
        terms.append(
            g1 * a * (y - m(1, w)) / p
            - g0 * (1 - a) * (y - m(0, w)) / (1 - p)
            + g1 * (m(1, w) - mu1)
            - g0 * (m(0, w) - mu0)
        )
    return var(terms)


def opt_weights(ns, s2):
    raw = [n / s for n, s in zip(ns, s2)]
    return [r / sum(raw) for r in raw]


def final_var(stages, mechs, link, weights, mu1, mu0):
    _, d = LINKS[link]
    g1, g0 = d(mu1), d(mu0)
    n1 = len(stages[0])
    total = 0.0
    for s, mech, eta in zip(stages, mechs, weights):
        c = c_fn(link, mu1, mu0, eta, mech)
        terms = []
        for r in s:
            a, y, w = r["a"], r["y"], r["w"]
            p = propensity(mech, w)
            terms.append(eta * g1 * a * (y - mu1) / p - eta * g0 * (1 - a) * (y - mu0) / (1 - p) - (a - p) * c(w))
        total += n1 / len(s) * var(terms)
    return total, math.sqrt(total / n1)


def main():
    rng = random.Random(7)
    cir_mechs = [{"kind": "fixed", "pi": 0.5}, {"kind": "fixed", "pi": 0.35}]
    cir = [draw_stage(rng, 1, 12, cir_mechs[0]), draw_stage(rng, 2, 14, cir_mechs[1])]
    cdr_mechs = [{"kind": "fixed", "pi": 0.5}, {"kind": "logistic", "index": 0, "coefficients": [-0.2, 0.9]}]
    cdr = [draw_stage(rng, 1, 10, cdr_mechs[0]), draw_stage(rng, 2, 16, cdr_mechs[1])]
    mu1, mu0, theta = 0.42, 0.31, 0.55

    cases = []
    for link in ["logit", "identity", "log"]:
        s2 = [stage_var(s, mech, link, mu1, mu0) for s, mech in zip(cdr, cdr_mechs)]
        eta = opt_weights([len(s) for s in cdr], s2)
        v, se = final_var(cdr, cdr_mechs, link, eta, mu1, mu0)
        cases.append(
            {
                "link": link,
                "augmented_delta": augmented(cir, cir_mechs, link, theta, mu1, mu0),
                "aipw_delta": aipw(cdr, cdr_mechs, link, eta, mu1, mu0),
                "stage_variance": s2,
                "optimal_weights": eta,
                "final_variance": v,
                "final_se": se,
            }
        )

    out = {
        "model": MODEL,
        "mu1": mu1,
        "mu0": mu0,
        "theta": theta,
        "cir": {"mechanisms": cir_mechs, "records": cir[0] + cir[1], "stage_sizes": [12, 14]},
        "cdr": {"mechanisms": cdr_mechs, "records": cdr[0] + cdr[1], "stage_sizes": [10, 16]},
        "cases": cases,
    }
    path = Path(__file__).resolve().parent.parent / "crates/core/tests/data/oracle.json"
    path.write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
