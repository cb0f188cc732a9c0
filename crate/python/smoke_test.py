"""Smoke test of the Python bindings: each entry point runs and agrees with
a direct evaluation where one is cheap to write."""

import cmath
import json
import math
import os
import tempfile

import pinchwpt


def check_channel():
    cfg = pinchwpt.Config()
    wavelength = 299_792_458.0 / 28e9
    h = pinchwpt.free_space_coeff((0.0, 0.0), (0.0, 0.0, 3.0), wavelength)
    assert math.isclose(abs(h), wavelength / (4 * math.pi * 3.0), rel_tol=1e-12)
    assert math.isclose(sum(pinchwpt.power_split(n, math.sin(math.pi / 4)) for n in (1, 2, 3)), 0.875, rel_tol=1e-12)
    g = pinchwpt.composite_gain(cfg, (30.0, 5.0), [10.0, 30.0, 50.0])
    assert isinstance(g, complex) and abs(g) > 0
    assert pinchwpt.project_layout(cfg, [0.5, 0.5, 0.5])[0] == 0.5


def check_rates():
    gains = [cmath.rect(1e-5, 0.3), cmath.rect(3e-5, 1.1)]
    powers = [0.02, 0.05]
    r = pinchwpt.rates(powers, gains, 1e-12, 0.25)
    total = sum(p * abs(h) ** 2 for p, h in zip(powers, gains))
    assert math.isclose(sum(r), 0.75 * math.log2(1 + total / 1e-12), rel_tol=1e-9)
    oma = pinchwpt.rates(powers, gains, 1e-12, 0.25, access="oma")
    assert sum(oma) <= sum(r)
    assert math.isclose(pinchwpt.ee_value([1.0, 1.0], [0.01, 0.01], 0.1), 2.0 / 0.12)
    assert pinchwpt.harvested_energy(0.5, 1.0, 0.0, 150.0, 0.0014, 0.024) == 0.0


def check_env():
    cfg = pinchwpt.Config(json.dumps({"system": {"episode_length": 5}}))
    env = pinchwpt.Env(cfg, seed=7)
    obs = env.reset(7)
    assert len(obs) == cfg.observation_dim
    done, steps = False, 0
    while not done:
        obs, reward, done, info = env.step([0.0] * cfg.action_dim)
        assert all(c <= a + 1e-12 for c, a in zip(info["consumed_j"], info["available_j"]))
        steps += 1
    assert steps == 5
    try:
        pinchwpt.Config(json.dumps({"agent": {"discount": 2.0}}))
    except pinchwpt.ConfigError as e:
        assert "agent.discount" in str(e)
    else:
        raise AssertionError("invalid discount accepted")


def check_training():
    doc = {
        "system": {"num_users": 2, "num_pas": 1, "episode_length": 5},
        "agent": {"hidden_widths": [32, 32], "batch_size": 16},
        "benchmark": {"eval_episodes": 2},
    }
    cfg = pinchwpt.Config(json.dumps(doc)).without_uncertainty()
    agent, returns = pinchwpt.train(cfg, seed=1, episodes=8)
    assert len(returns) == 8
    again, returns_again = pinchwpt.train(cfg, seed=1, episodes=8)
    assert returns == returns_again
    action = agent.act([0.5] * cfg.observation_dim)
    assert len(action) == cfg.action_dim and all(-1 <= a <= 1 for a in action)
    for policy in ("drl", "fixed", "discrete", "continuous_constrained"):
        stats = pinchwpt.evaluate(cfg, agent, policy)
        assert stats["policy"] == policy and stats["mean_ee"] >= 0
    report = pinchwpt.oracle_check(cfg, agent, 0)
    assert report["evaluations"] > 0
    if report["oracle_ee"] is not None:
        assert math.isclose(report["ratio"], report["agent_ee"] / report["oracle_ee"], rel_tol=1e-12)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "agent.json")
        agent.save(path)
        assert pinchwpt.Agent.load(path).act([0.5] * cfg.observation_dim) == action


if __name__ == "__main__":
    check_channel()
    check_rates()
    check_env()
    check_training()
    print("python smoke test passed")
