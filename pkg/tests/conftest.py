import numpy as np
import pytest

from slateopt.data import CandidateSet, CategoricalSchema, DistributionalCriteria


def binary_query(cats, labels=None, scores=None, extra=None, criteria=None, qid="q", n_pad=0):
    """Candidate set with one continuous feature per entry of ``extra`` and one
    binary categorical variable per column of ``cats`` (each one-hot encoded)."""
    cats = np.asarray(cats, dtype=int)
    if cats.ndim == 1:
        cats = cats[:, None]
    n, c = cats.shape
    cont = np.zeros((n, 0)) if extra is None else np.asarray(extra, dtype=float).reshape(n, -1)
    onehot = np.concatenate([np.eye(2)[cats[:, j]] for j in range(c)], axis=1)
    x = np.hstack([cont, onehot])
    labels = np.zeros(n) if labels is None else np.asarray(labels, dtype=float)
    scores = -np.arange(n, dtype=float) if scores is None else np.asarray(scores, dtype=float)
    if n_pad:
        x = np.vstack([x, np.zeros((n_pad, x.shape[1]))])
        labels = np.concatenate([labels, np.zeros(n_pad)])
        scores = np.concatenate([scores, np.zeros(n_pad)])
    pad = np.r_[np.zeros(n, bool), np.ones(n_pad, bool)]
    base = cont.shape[1]
    schema = CategoricalSchema(tuple((base + 2 * j, base + 2 * j + 1) for j in range(c)), x.shape[1])
    if criteria is not None and not isinstance(criteria, DistributionalCriteria):
        criteria = DistributionalCriteria(tuple(np.asarray(d, float) for d in criteria))
    return CandidateSet(qid, x, labels, scores, criteria, pad), schema


def random_query(rng, n, c=2, m_cont=2, n_pad=0, k=None, qid="q", graded=False):
    cats = rng.integers(0, 2, size=(n, c))
    labels = rng.integers(0, 5, size=n).astype(float) if graded else (rng.random(n) < 0.4).astype(float)
    scores = np.sort(rng.normal(size=n))[::-1]
    extra = rng.normal(size=(n, m_cont))
    d = []
    for _ in range(c):
        p = rng.uniform(0.1, 0.9)
        d.append([1 - p, p])
    return binary_query(cats, labels, scores, extra, d, qid=qid, n_pad=n_pad)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
