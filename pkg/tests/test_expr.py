"""Expression trees, the DSL, canonical keys and random generation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from autoloss import zoo
from autoloss.expr import (
    ArityMismatch, Binary, Const, DepthLimitExceeded, DslSyntaxError, Input, LimitExceeded,
    Limits, NodeNotFound, Unary, UnknownOperator, WrongBranchSymbol, canonical_key,
    canonical_string, make, parse, random_expr, replace_subtree, symbol_distribution,
    symbol_table, to_string,
)


def chain(depth: int, branch: str = "cls") -> str:
    return "Neg(" * (depth - 1) + ("X" if branch == "cls" else "I") + ")" * (depth - 1)


class TestParse:
    def test_iou_loss(self):
        e = parse("Add(1,Neg(Div(I,U)))", "reg")
        assert e.root == Binary("Add", Const(1), Unary("Neg", Binary("Div", Input("i"), Input("u"))))
        assert (e.size, e.depth) == (6, 4)

    def test_single_input(self):
        assert parse("X", "cls").root == Input("x")

    def test_wrong_branch_symbol(self):
        with pytest.raises(WrongBranchSymbol):
            parse("Add(I,Y)", "reg")

    def test_case_insensitive(self):
        assert parse("add(1,neg(div(i,u)))", "regression") == parse("Add(1,Neg(Div(I,U)))", "reg")

    def test_whitespace(self):
        assert parse(" Add( 1 , X ) ", "cls") == parse("Add(1,X)", "cls")

    @pytest.mark.parametrize("text", ["Mul(Y,Add(1,Z))", "Mul(Q,X)", "Square(X)", "Foo(X)"])
    def test_undefined_symbols_rejected(self, text):
        with pytest.raises(UnknownOperator):
            parse(text, "cls")

    def test_operator_outside_branch(self):
        with pytest.raises(UnknownOperator):
            parse("Softmax(I)", "reg")

    @pytest.mark.parametrize("text", ["Neg(X,Y)", "Add(X)", "Neg"])
    def test_arity(self, text):
        with pytest.raises(ArityMismatch):
            parse(text, "cls")

    @pytest.mark.parametrize("text", ["4", "0", "Add(1,7)"])
    def test_constant_range(self, text):
        with pytest.raises(DslSyntaxError):
            parse(text, "cls")

    def test_error_position(self):
        with pytest.raises(DslSyntaxError) as info:
            parse("Add(1,Neg(Div(I,U))", "reg")
        assert info.value.pos == 19
        assert info.value.pretty().splitlines()[-1].index("^") == 2 + 19

    @pytest.mark.parametrize("text", ["", "Add(1,X))", "Add(1;X)", "Add(,X)"])
    def test_malformed(self, text):
        with pytest.raises(DslSyntaxError):
            parse(text, "cls")

    def test_depth_limit(self):
        parse(chain(10), "cls")
        with pytest.raises(DepthLimitExceeded):
            parse(chain(11), "cls")

    def test_size_limit(self):
        text = "Add(" * 20 + "X" + ",X)" * 20
        with pytest.raises(LimitExceeded):
            parse(text, "cls", Limits(max_nodes=40, max_depth=30))


class TestPrint:
    def test_iou(self):
        assert to_string(parse("add(1,neg(div(i,u)))", "reg")) == "Add(1,Neg(Div(I,U)))"

    def test_constant(self):
        assert to_string(Const(2)) == "2"

    def test_ce_from_zoo(self):
        assert to_string(zoo.get("CE").expr) == "Neg(Dot(Y,Log(Softmax(X))))"

    @pytest.mark.parametrize("branch", ["cls", "reg"])
    def test_round_trip_random(self, branch):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            e = random_expr(branch, rng, int(rng.integers(1, 41)))
            assert parse(to_string(e), branch) == e


class TestCanonicalKey:
    def test_commutative(self):
        assert canonical_key(parse("Add(X,W)", "cls")) == canonical_key(parse("Add(W,X)", "cls"))
        assert canonical_key(parse("Mul(Neg(X),W)", "cls")) == canonical_key(parse("Mul(W,Neg(X))", "cls"))

    def test_not_commutative(self):
        assert canonical_key(parse("Sub(X,W)", "cls")) != canonical_key(parse("Sub(W,X)", "cls"))

    def test_branch_in_key(self):
        assert canonical_key(parse("1", "cls")) != canonical_key(parse("1", "reg"))

    def test_nested_permutation(self):
        a = parse("Add(Mul(X,Y),Add(W,1))", "cls")
        b = parse("Add(Add(1,W),Mul(Y,X))", "cls")
        assert canonical_string(a) == canonical_string(b)

    def test_no_collisions(self):
        rng = np.random.default_rng(3)
        sample = [random_expr("cls", rng, 15) for _ in range(1000)]
        forms = {canonical_string(e) for e in sample}
        keys = {canonical_key(e) for e in sample}
        assert len(keys) == len(forms)


class TestReplaceSubtree:
    def test_root(self):
        e = replace_subtree(parse("Neg(X)", "cls"), 0, Const(1))
        assert to_string(e) == "1"

    def test_leaf(self):
        e = replace_subtree(parse("Neg(X)", "cls"), 1, parse("W", "cls"))
        assert to_string(e) == "Neg(W)"

    def test_preorder_reference(self):
        e = parse("Add(Neg(X),Y)", "cls")
        assert to_string(replace_subtree(e, 3, Input("w"))) == "Add(Neg(X),W)"

    def test_depth_limit(self):
        e = parse(chain(10), "cls")
        with pytest.raises(LimitExceeded):
            replace_subtree(e, 9, parse(chain(3), "cls").root)

    def test_missing_node(self):
        with pytest.raises(NodeNotFound):
            replace_subtree(parse("X", "cls"), 1, Const(1))

    def test_branch_closure(self):
        with pytest.raises(WrongBranchSymbol):
            replace_subtree(parse("Neg(X)", "cls"), 1, parse("I", "reg"))

    def test_make_rejects_foreign_symbol(self):
        with pytest.raises(WrongBranchSymbol):
            make(Unary("Neg", Input("i")), "cls")


class TestRandomExpr:
    def test_budget_one_is_leaf(self):
        for seed in range(20):
            assert random_expr("cls", seed, 1).size == 1

    def test_deterministic(self):
        assert random_expr("reg", 42, 20) == random_expr("reg", 42, 20)

    @settings(max_examples=200)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 60), st.sampled_from(["cls", "reg"]))
    def test_respects_limits(self, seed, budget, branch):
        e = random_expr(branch, seed, budget)
        assert e.size <= min(budget, 40)
        assert e.depth <= 10

    @settings(max_examples=200)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["cls", "reg"]))
    def test_round_trip_property(self, seed, branch):
        e = random_expr(branch, seed, 40)
        assert parse(to_string(e), branch) == e

    @pytest.mark.parametrize("branch", ["cls", "reg"])
    def test_root_symbol_frequencies(self, branch):
        table = symbol_table(branch)
        p = symbol_distribution(branch, 15, 10)
        names = [name for name, _ in table]
        rng = np.random.default_rng(0)
        n = 10_000
        counts = np.zeros(len(table))
        for _ in range(n):
            root = random_expr(branch, rng, 15).root
            if isinstance(root, Input):
                name = root.symbol.upper()
            elif isinstance(root, Const):
                name = str(root.value)
            else:
                name = root.op
            counts[names.index(name)] += 1
        expected = n * p
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - expected) <= 3 * sigma)
        assert stats.chisquare(counts, expected).pvalue > 1e-3

    def test_distribution_respects_budget(self):
        p = symbol_distribution("cls", 1)
        table = symbol_table("cls")
        assert all(prob == 0 for (_, a), prob in zip(table, p) if a > 0)
        p = symbol_distribution("cls", 2)
        assert all(prob == 0 for (_, a), prob in zip(table, p) if a == 2)
