import numpy as np
import pytest

from listgen.model import ScorerModel, evaluate


def tiny_model(seed=0, zero_output=False):
    return ScorerModel(embed_dim=8, hidden_dim=16, vocab_size=64, seed=seed, zero_output=zero_output)


def random_query(rng, vocab=64, max_len=5):
    return rng.integers(1, vocab, size=int(rng.integers(1, max_len + 1)))


def fd_check(model, objective, rng, coords_per_param=3, step=1e-4):
    """Max relative error between analytic and central-difference gradients."""
    _, grads = evaluate(model, objective, with_grad=True)
    worst = 0.0
    for name, p in model.params.items():
        if name == "query_embed":
            # only rows that the objective touches carry gradient
            rows = np.flatnonzero(np.abs(grads[name]).sum(1))
            if len(rows) == 0:
                continue
            idx = [(int(rng.choice(rows)), int(rng.integers(p.shape[1]))) for _ in range(coords_per_param)]
        else:
            idx = [tuple(int(rng.integers(s)) for s in p.shape) for _ in range(coords_per_param)]
        for ix in idx:
            old = p[ix]
            p[ix] = old + step
            up = evaluate(model, objective)
            p[ix] = old - step
            down = evaluate(model, objective)
            p[ix] = old
            fd = (up - down) / (2 * step)
            an = grads[name][ix]
            scale = max(abs(fd), abs(an))
            if scale > 1e-7:
                worst = max(worst, abs(fd - an) / scale)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            for key, value in getattr(rep, "user_properties", []):
                if key == "acceptance":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
