import itertools

import numpy as np
import pytest

from maintnet.assignment import hungarian
from maintnet.errors import ValidationError


def brute_force_cost(matrix: np.ndarray) -> float:
    n = matrix.shape[0]
    return min(
        sum(matrix[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n))
    )


def test_zero_diagonal_matrix_assigns_identity():
    m = np.array([[0.0, 5.0], [7.0, 0.0]])
    assignment, cost = hungarian(m)
    assert cost == 0.0
    assert list(assignment) == [0, 1]


def test_worked_three_by_three_example():
    assignment, cost = hungarian([[4, 1, 3], [2, 0, 5], [3, 2, 2]])
    assert cost == 5.0
    assert list(assignment) == [1, 0, 2]


def test_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        hungarian([[1.0, 2.0]])
    with pytest.raises(ValidationError):
        hungarian([[1.0, -0.5], [0.0, 1.0]])


def test_assignment_is_permutation_and_optimal_random():
    rng = np.random.default_rng(42)
    for _ in range(400):
        n = int(rng.integers(1, 7))
        m = rng.random((n, n)) * 10
        assignment, cost = hungarian(m)
        assert sorted(assignment.tolist()) == list(range(n))
        assert cost == pytest.approx(brute_force_cost(m), abs=1e-9)


def test_tie_heavy_integer_matrices_exact():
    rng = np.random.default_rng(1)
    for _ in range(400):
        n = int(rng.integers(2, 7))
        m = rng.integers(0, 4, size=(n, n)).astype(float)
        _, cost = hungarian(m)
        assert cost == brute_force_cost(m)
