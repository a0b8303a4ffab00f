import threading

import numpy as np
import pytest

from ridecharge.agents import LearnerConfig, MlpParams, PolicyLearner, policy_update
from ridecharge.agents.learner import Trajectory, advantages
from ridecharge.agents.mlp import log_softmax, sample_action
from ridecharge.env import EnvConfig
from ridecharge.server import EnvServer

BANDIT_OBS = np.array([0.5, 0.25, 0.1, 0.2, 0.2, 0.3, 0.4])


def bandit_batch(params, rng, n=256, means=(0.2, 0.8)):
    """One batch from a two-arm bandit with Gaussian payouts; every step ends an episode."""
    obs = np.tile(BANDIT_OBS, (n, 1))
    logits = params.policy(obs)
    acts, logps = zip(*(sample_action(row, rng) for row in logits))
    acts = np.array(acts)
    rewards = np.asarray(means)[acts] + 0.1 * rng.standard_normal(n)
    values = params.value(obs)[:, 0]
    batch = Trajectory(obs, acts, rewards, np.array(logps), values, np.ones(n, bool), returns=rewards)
    batch.advantages = advantages(rewards, values)
    return batch


def run_bandit(updates=50, seed=0, **cfg):
    """Best-arm probability after each update."""
    rng = np.random.default_rng(seed)
    learner = PolicyLearner(MlpParams.init(rng), LearnerConfig(**cfg))
    probs = []
    for _ in range(updates):
        params, _ = policy_update(learner, bandit_batch(learner.params, rng))
        probs.append(float(np.exp(log_softmax(params.policy(BANDIT_OBS))[1])))
    return probs


@pytest.fixture
def bandit():
    return run_bandit


@pytest.fixture
def env_server():
    """Yields ``start(config, idle_timeout)``, which serves on an ephemeral port."""
    servers = []

    def start(config=None, idle_timeout=30.0):
        srv = EnvServer(("127.0.0.1", 0), config or EnvConfig(), idle_timeout)
        threading.Thread(target=srv.serve_forever, daemon=True).start()
        servers.append(srv)
        return srv

    yield start
    for srv in servers:
        srv.shutdown()
        srv.server_close()


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance(request):
    """``record(number, passed, detail)`` collects one summary line per criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number, passed, detail):
        lines.append((number, bool(passed), detail))
        print(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(lines, key=lambda x: x[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
