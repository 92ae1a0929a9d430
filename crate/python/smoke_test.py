"""Smoke test for the pystochcl extension.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pystochcl-*.whl

then run ``python python/smoke_test.py``.
"""

import math

import pystochcl as sc


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    grid = sc.Grid(32)
    g = grid.project(math.sqrt(2.0), 1)
    assert len(g) == 32
    assert close(grid.l2_norm(g) ** 2, 0.9967913640449608, 1e-12)

    oracle = sc.analytic(nu=0.1, m0=1, n=32, dt=2.0**-10)
    assert close(oracle["phi_split"], 0.8927276141891239, 1e-10)
    assert close(oracle["w2_space_limit"], 1.0 / math.sqrt(2.4), 1e-12)

    flux = sc.Flux(1.0)
    w, iters = flux.implicit_stage(g, 0.1, 0.5)
    assert iters <= 50
    assert grid.l2_norm(w) <= grid.l2_norm(g)

    sim = sc.Simulation(seed=7)
    rows = sim.run(1.0, stride=256)
    assert len(rows) == 4 and rows[-1]["t"] == 1.0
    again = sc.Simulation(seed=7)
    again.step(1024)
    assert again.u == sim.u, "fixed seed must replay bit for bit"
    assert abs(sum(sim.u)) < 1e-10

    toml_sim = sc.Simulation.from_toml('n = 16\nflux = { kind = "burgers", alpha = 0.0 }\n')
    toml_sim.step(10)
    assert len(toml_sim.u) == 16

    est = sc.ergodic_estimate(t_final=8.0, replicas=8, dt=2.0**-6, alpha=0.0, seed=3)
    assert est.ci_low <= est.mean <= est.ci_high
    assert len(est.replica_means) == 8

    checks = sc.selfcheck(instances=50)
    assert len(checks) >= 10 and all(ok for _, ok, _, _ in checks)

    try:
        sc.Simulation(n=1)
    except sc.ConfigError:
        pass
    else:
        raise AssertionError("n = 1 must be rejected")

    print(f"pystochcl {sc.__version__}: smoke test passed ({est})")


if __name__ == "__main__":
    main()
