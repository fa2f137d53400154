import numpy as np
import pytest

from predstack.core import Manifest, ModelDrawMatrix, save_manifest, validate_manifest
from predstack.simlab import LinRegPrior, fit_linreg_mcmc, log_marginal_likelihood


def random_manifest(K=3, S=50, n=20, seed=0, marginals=True, means=True):
    rng = np.random.default_rng(seed)
    models = []
    for k in range(K):
        ll = rng.normal(-1.0 - 0.3 * k, 0.5, size=(S, n))
        pm = rng.normal(0, 1, size=(S, n)) if means else None
        lm = float(ll.mean(axis=0).sum()) if marginals else None
        models.append(ModelDrawMatrix(f"M{k + 1}", ll, pm, lm))
    return validate_manifest(Manifest(models, seed=seed))


@pytest.fixture
def regression_manifest(tmp_path):
    """Six univariate regressions on shared data, written to disk."""
    rng = np.random.default_rng(11)
    X = rng.normal(5, 1, (40, 6))
    y = X @ np.array([0.3, 0.1, 0.2, 0.4, 0.5, 0.0]) + rng.standard_normal(40)
    prior = LinRegPrior()
    models = []
    for k in range(6):
        fit = fit_linreg_mcmc(X[:, [k]], y, prior, 400, seed=k)
        models.append(fit.draw_matrix(f"Model {k + 1}",
                                      log_marginal_likelihood(X[:, [k]], y, prior)))
    path = save_manifest(Manifest(models, seed=3), tmp_path / "man.json")
    np.savetxt(tmp_path / "y.csv", y[None, :], delimiter=",")
    return path


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] #{criterion} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("#")[1].split()[0])):
            terminalreporter.write_line(line)
