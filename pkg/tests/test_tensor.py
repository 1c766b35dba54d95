import itertools
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from src.core import Sector, parse_config, rotate
from src.multiline import count_ancestors
from src.pushing import two_species_weight, weight_recursive
from src.tensor import (
    FundamentalSymbol,
    TensorOperator,
    apply,
    build_aKM,
    build_ansatz,
    build_fundamental,
    normalization,
    probability,
    trace_product,
    trace_weight,
)
from src.utils import DivergentTraceError, PreconditionError, TruncationOverflowError


def monomial_set(op: TensorOperator) -> set[tuple[str, ...]]:
    return {tuple(m) for m in op.monomials()}


def test_fundamental_matrices():
    assert build_fundamental(FundamentalSymbol.D, 3).tolist() == [[1, 1, 0], [0, 1, 1], [0, 0, 1]]
    assert build_fundamental(FundamentalSymbol.E, 3).tolist() == [[1, 0, 0], [1, 1, 0], [0, 1, 1]]
    assert build_fundamental(FundamentalSymbol.A, 3).tolist() == [[1, 0, 0], [0, 0, 0], [0, 0, 0]]
    with pytest.raises(PreconditionError):
        build_fundamental(FundamentalSymbol.ONE, 0)


@pytest.mark.parametrize("d", [2, 5, 9])
def test_delta_eps_is_identity_below_the_cut(d):
    eps = build_fundamental(FundamentalSymbol.EPS, d)
    delta = build_fundamental(FundamentalSymbol.DELTA, d)
    product = delta @ eps
    assert np.array_equal(product[: d - 1, : d - 1], np.eye(d - 1, dtype=np.int64))
    assert product[d - 1, d - 1] == 0


def test_operator_arithmetic():
    one = TensorOperator.monomial("1")
    eps = TensorOperator.monomial("eps")
    assert (one + eps).combined() == TensorOperator.monomial("E")
    assert (one - one) == TensorOperator.zero(1)
    assert str(2 * one.tensor(eps)) == "2·1⊗eps"
    assert str(TensorOperator.zero(2)) == "0"
    with pytest.raises(PreconditionError):
        one + one.tensor(one)


def test_to_dense_uses_the_first_slot_as_most_significant():
    op = TensorOperator.monomial("A", "E")
    expected = np.kron(
        build_fundamental(FundamentalSymbol.A, 3), build_fundamental(FundamentalSymbol.E, 3)
    )
    assert np.array_equal(op.to_dense(3), expected)


def test_apply():
    D = TensorOperator.monomial("D")
    E = TensorOperator.monomial("E")
    assert apply(D, {(0,): 1}) == {(0,): 1}
    assert apply(D, {(2,): 3}) == {(2,): 3, (1,): 3}
    assert apply(E, {(0,): 1}) == {(0,): 1, (1,): 1}
    assert apply(TensorOperator.monomial("delta"), {(0,): 1}) == {}
    with pytest.raises(TruncationOverflowError):
        apply(E, {(2,): 1}, d=3)
    with pytest.raises(PreconditionError):
        apply(D, {(0, 0): 1})


@pytest.mark.parametrize(
    "K, M, symbols",
    [
        (0, 0, ("1", "1")),
        (0, 1, ("eps", "1")),
        (0, 2, ("1", "eps")),
        (1, 0, ("delta", "1")),
        (2, 0, ("A", "delta")),
        (3, 0, ("A", "A")),
        (1, 1, ("1", "1")),
        (2, 2, ("A", "1")),
        (1, 2, ("delta", "eps")),
    ],
)
def test_aKM_for_three_species(K, M, symbols):
    assert monomial_set(build_aKM(3, K, M)) == {symbols}


def test_aKM_undefined_indices():
    with pytest.raises(PreconditionError):
        build_aKM(3, 2, 1)
    with pytest.raises(PreconditionError):
        build_aKM(3, 0, 3)
    with pytest.raises(PreconditionError):
        build_aKM(3, 4, 0)


def test_two_species_ansatz():
    ansatz = build_ansatz(2)
    assert monomial_set(ansatz[0]) == {("E",)}
    assert monomial_set(ansatz[1]) == {("D",)}
    assert monomial_set(ansatz[2]) == {("A",)}


def test_three_species_ansatz():
    ansatz = build_ansatz(3)
    assert monomial_set(ansatz[3]) == {("A", "A", "E")}
    assert monomial_set(ansatz[2]) == {("A", "delta", "E"), ("A", "1", "A")}
    assert monomial_set(ansatz[1]) == {("delta", "1", "E"), ("1", "1", "D"), ("delta", "eps", "A")}
    assert monomial_set(ansatz[0]) == {("1", "1", "E"), ("eps", "1", "D"), ("1", "eps", "A")}


def ket_sum(*kets: tuple[int, ...]) -> dict[tuple[int, ...], int]:
    """Sum of basis kets, where a ket with a negative counter is zero"""
    return dict(Counter(k for k in kets if min(k) >= 0))


def queue_transitions(tau: int, x: int, y: int, z: int) -> dict[tuple[int, ...], int]:
    """Image of |x, y, z⟩ under X_tau for three species, written case by case"""
    match tau:
        case 3:
            if x != 0 or y != 0:
                return {}
            return ket_sum((0, 0, z), (0, 0, z + 1))
        case 2:
            if x != 0:
                return {}
            kets = [(0, y - 1, z), (0, y - 1, z + 1)]
            return ket_sum(*kets, *([(0, y, 0)] if z == 0 else []))
        case 1:
            kets = [(x, y, z), (x, y, z - 1), (x - 1, y, z), (x - 1, y, z + 1)]
            return ket_sum(*kets, *([(x - 1, y + 1, 0)] if z == 0 else []))
        case 0:
            kets = [(x + 1, y, z), (x + 1, y, z - 1), (x, y, z), (x, y, z + 1)]
            return ket_sum(*kets, *([(x, y + 1, 0)] if z == 0 else []))


@pytest.mark.parametrize("tau", [0, 1, 2, 3])
def test_three_species_operators_move_the_queues(tau):
    op = build_ansatz(3)[tau]
    for x, y, z in itertools.product(range(5), repeat=3):
        assert apply(op, {(x, y, z): 1}) == queue_transitions(tau, x, y, z), (x, y, z)


@pytest.mark.parametrize("n", range(5))
def test_class_three_needs_both_upper_queues_empty(n):
    X3 = build_ansatz(3)[3]
    assert apply(X3, {(0, 0, n): 1}) == {(0, 0, n): 1, (0, 0, n + 1): 1}
    assert apply(X3, {(1, 0, n): 1}) == {}
    assert apply(X3, {(0, 2, n): 1}) == {}
    assert apply(TensorOperator.monomial("D"), {(0,): 1}) == {(0,): 1}


@pytest.mark.parametrize("N", range(0, 6))
def test_ansatz_ranks(N):
    ansatz = build_ansatz(N)
    assert sorted(ansatz) == list(range(N + 1))
    assert all(op.rank == N * (N - 1) // 2 for op in ansatz.values())
    assert all(c == 1 for op in ansatz.values() for c, _ in op.terms)


@pytest.mark.parametrize(
    "text, weight", [("2103", 9), ("0210", 3), ("0211021", 6), ("0110", 1), ("0000", 1)]
)
def test_trace_weight(text, weight):
    assert trace_weight(parse_config(text)) == weight


@pytest.mark.parametrize(
    "text, expected",
    [("0210", Fraction(3, 24)), ("0211021", Fraction(6, 735)), ("2103", Fraction(9, 96))],
)
def test_probability(text, expected):
    assert probability(parse_config(text)) == expected


def test_normalization():
    assert normalization(Sector(length=4, populations=(1, 1))) == 24
    assert normalization(Sector(length=7, populations=(3, 2))) == 735
    assert normalization(Sector(length=4, populations=(1, 1, 1))) == 96


@pytest.mark.parametrize("text", ["2103", "0211021", "3120", "21302"])
def test_trace_is_stable_under_larger_truncation(text):
    config = parse_config(text)
    L = config.length
    weights = {trace_weight(config, d=d) for d in (L + 1, L + 2, L + 3)}
    assert weights == {trace_weight(config)}


def test_small_truncation_overflows():
    with pytest.raises(TruncationOverflowError):
        trace_weight(parse_config("2103"), d=2)


def test_trace_without_the_highest_class_diverges():
    with pytest.raises(DivergentTraceError):
        trace_product((1, 0), 2, d=8)


def test_trace_product_labels():
    with pytest.raises(PreconditionError):
        trace_product((3, 0), 2, d=8)


@pytest.mark.parametrize("text", ["0210", "0211021", "2012", "221010"])
def test_two_species_trace_is_cyclic(text):
    config = parse_config(text)
    weight = trace_product(config.sites, 2, d=config.length + 1)
    for k in range(1, config.length):
        assert trace_product(rotate(config, k).sites, 2, d=config.length + 1) == weight


@pytest.mark.parametrize("length, populations", [(4, (1, 1)), (6, (2, 2)), (7, (3, 2))])
def test_two_species_trace_equals_pushing_weight(length, populations):
    for config in Sector(length=length, populations=populations).configurations():
        assert trace_weight(config) == two_species_weight(config)


@pytest.mark.parametrize("length, populations", [(4, (1, 1, 1)), (5, (1, 1, 1)), (5, (2, 1, 1))])
def test_probabilities_sum_to_one(length, populations):
    sector = Sector(length=length, populations=populations)
    assert sum(probability(c) for c in sector.configurations()) == 1


@pytest.mark.parametrize(
    "length, populations", [(4, (1, 1, 1)), (5, (1, 1, 1)), (5, (1, 2, 1)), (6, (2, 1, 1))]
)
def test_weight_routes_agree(length, populations):
    for config in Sector(length=length, populations=populations).configurations():
        weight = trace_weight(config)
        assert weight == weight_recursive(config)
        assert weight == count_ancestors(config)


@pytest.mark.slow
@pytest.mark.parametrize("length, populations", [(4, (1, 1, 1, 1)), (5, (1, 1, 1, 1))])
def test_weight_routes_agree_for_four_species(length, populations):
    sector = Sector(length=length, populations=populations)
    total = 0
    for config in sector.configurations():
        weight = trace_weight(config)
        assert weight == weight_recursive(config)
        total += weight
    assert total == normalization(sector)
