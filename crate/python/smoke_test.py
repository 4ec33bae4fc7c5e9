"""Smoke test for the silofed extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import json
import math
import tempfile
from pathlib import Path

import silofed


def check_numerics():
    adv, targets = silofed.gae([1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [False, True], 0.99, 0.0)
    assert adv == [1.0, 0.0] and targets == [1.0, 0.0]
    var, cvar = silofed.empirical_cvar([float(x) for x in range(1, 11)], 0.9)
    assert (var, cvar) == (9.0, 10.0)
    p = silofed.masked_softmax([3.0, 1.0, 2.0], [True, False, True])
    assert p[1] == 0.0 and math.isclose(sum(p), 1.0)
    _, flagged = silofed.detect_anomalies([0.9, 0.8, 0.85, -0.7, 0.88], 3.0)
    assert flagged == [3]
    w = silofed.similarity_weights([0.9, 0.9], 0.1)
    assert math.isclose(w[0], 0.5)


def check_env():
    fleet = silofed.Fleet(4, seed=7)
    assert len(fleet) == 4
    assert all(6 <= n <= 10 for n in fleet.resource_counts())
    json.loads(fleet.to_json())
    env = silofed.SiloEnv(fleet, 0, seed=7, apps_per_episode=3)
    env.reset()
    steps = 0
    while (mask := env.feasible()) is not None:
        env.step(mask.index(True))
        steps += 1
    cost = env.cost()
    assert env.is_done() and steps > 0 and cost["apps"] == 3


def check_run():
    cfg = silofed.ExperimentConfig("desk")
    assert cfg.variant == "full" and "naive-averaging" in silofed.VARIANTS
    cfg.rounds = 2
    cfg.silos = 4
    cfg.validate()
    again = silofed.ExperimentConfig.from_toml(cfg.to_toml())
    assert again.rounds == 2
    out = silofed.run_experiment(cfg, 1)
    assert len(out.fleet_curve()) == 2
    header = out.metrics_csv().splitlines()[0]
    assert header.startswith("round,silo,cost")
    assert out.summary()["final_cost"] > 0.0
    with tempfile.TemporaryDirectory() as d:
        out.write(d)
        assert (Path(d) / "metrics.csv").exists()
    try:
        cfg.variant = "bogus"
    except ValueError as e:
        assert "[config]" in str(e)
    else:
        raise AssertionError("bad variant accepted")


if __name__ == "__main__":
    check_numerics()
    check_env()
    check_run()
    print("silofed smoke test passed")
