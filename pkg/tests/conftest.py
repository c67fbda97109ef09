import numpy as np
import pytest

from degkam.series import Caps, TFSeries


def random_series(rng, n=2, d=1, kmax=2, wmax=3, nterms=6, scale=1.0):
    """Random real-valued series with ``nterms`` conjugate pairs."""
    terms = {}
    for _ in range(nterms):
        k = tuple(int(v) for v in rng.integers(-kmax, kmax + 1, size=n))
        while sum(abs(v) for v in k) > kmax:
            k = tuple(int(v) for v in rng.integers(-kmax, kmax + 1, size=n))
        while True:
            iota = tuple(int(v) for v in rng.integers(0, 2, size=n))
            j = tuple(int(v) for v in rng.integers(0, wmax + 1, size=2 * d))
            if 2 * sum(iota) + sum(j) <= wmax:
                break
        c = scale * complex(rng.normal(), rng.normal())
        if not any(k):
            c = c.real
        neg = tuple(-v for v in k)
        terms[(k, iota, j)] = terms.get((k, iota, j), 0) + c
        if any(k):
            terms[(neg, iota, j)] = terms.get((neg, iota, j), 0) + np.conj(c)
    return TFSeries.from_terms(n, d, terms, Caps(kmax, wmax))


def random_points(rng, count, n=2, d=1, radius=0.5):
    x = rng.uniform(0, 2 * np.pi, size=(count, n))
    y = rng.uniform(-radius, radius, size=(count, n))
    z = rng.uniform(-radius, radius, size=(count, 2 * d))
    return x, y, z


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


GOLDEN = (1 + 5 ** 0.5) / 2


def quartic_g(n=2):
    zero = (0,) * n
    return TFSeries.from_terms(n, 1, {(zero, zero, (4, 0)): 0.25, (zero, zero, (0, 4)): 0.25})


def acceptance_problem(eps=1e-6):
    """``N = <omega, y> + (u^4 + v^4)/4`` and ``P = eps cos x1 + eps u cos x2``."""
    from degkam.normal_form import NormalForm
    from degkam.series import add_scale

    N = NormalForm.from_parts([1.0, GOLDEN], quartic_g())
    P = add_scale(1.0, TFSeries.cos_mode(2, 1, (1, 0), c=eps),
                  TFSeries.cos_mode(2, 1, (0, 1), j=(1, 0), c=eps))
    return N, P


def acceptance_schedule(eps=1e-6, **kw):
    from degkam.schedule import init_schedule

    args = dict(m=3, K_base=8)
    args.update(kw)
    return init_schedule(eps, 2, 1, 2.0, 0.5, 0.5, **args)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
