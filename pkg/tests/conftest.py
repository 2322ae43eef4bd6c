import sys

import numpy as np
from scipy import integrate


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo one verdict line per acceptance criterion into the run summary.

    Passing tests have their stdout captured and discarded, so the lines are
    collected by the acceptance module and re-emitted here where they are
    always visible.
    """
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "VERDICTS", None) if mod else None
    if not lines:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.line(line)


def quadrature_kl(log_p, log_q, low, high):
    """KL(p || q) by adaptive quadrature over [low, high].

    Independent of every closed form under test; both densities are given
    as log-density callables on scalars.
    """

    def integrand(x):
        lp = log_p(x)
        if not np.isfinite(lp):
            return 0.0
        return np.exp(lp) * (lp - log_q(x))

    value, _err = integrate.quad(integrand, low, high, limit=200)
    return value


def gaussian_logpdf(x, mean, sigma):
    return -0.5 * ((x - mean) / sigma) ** 2 - np.log(sigma) - 0.5 * np.log(2 * np.pi)
