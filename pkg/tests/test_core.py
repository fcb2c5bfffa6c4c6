"""Core types and the runtime prediction contract."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from pvml.core import (
    CATEGORICAL,
    UNKNOWN,
    CategoricalDomain,
    CategoricalOutput,
    Dataset,
    Example,
    FeatureDomain,
    FeatureInfo,
    Model,
    RealOutput,
    argmax_label,
    build_dataset,
    make_example,
    predict,
)
from pvml.data import InMemoryDataSource
from pvml.errors import (
    EmptyExample,
    EmptyScores,
    EmptySource,
    MixedOutputTypes,
    NoFeatureOverlap,
    NonFiniteFeature,
    OutputTypeMismatch,
    UnlabelledExample,
)
from pvml.provenance import object_provenance


class TestMakeExample:
    def test_sorts_by_name(self):
        ex = make_example([("b", 1.0), ("a", 2.0)])
        assert [(f.name, f.value) for f in ex.features] == [("a", 2.0), ("b", 1.0)]

    def test_duplicates_merge_by_sum(self):
        ex = make_example([("a", 1.0), ("a", 2.0)])
        assert [(f.name, f.value) for f in ex.features] == [("a", 3.0)]

    def test_nan_rejected(self):
        with pytest.raises(NonFiniteFeature):
            make_example([("a", float("nan"))])

    def test_infinity_rejected(self):
        with pytest.raises(NonFiniteFeature):
            make_example([("a", float("inf"))])

    def test_empty_rejected(self):
        with pytest.raises(EmptyExample):
            make_example([])

    def test_weight_must_be_positive(self):
        with pytest.raises(ValueError):
            make_example([("a", 1.0)], weight=0.0)

    def test_control_characters_rejected(self):
        with pytest.raises(ValueError):
            make_example([("a\x00b", 1.0)])

    @given(
        st.lists(
            st.tuples(
                st.text(alphabet="abcdef", min_size=1, max_size=3),
                st.floats(-100, 100, allow_nan=False),
            ),
            min_size=1,
            max_size=10,
        )
    )
    @settings(max_examples=200, deadline=None)
    def test_idempotent(self, pairs):
        once = make_example(pairs)
        twice = make_example([(f.name, f.value) for f in once.features])
        assert once == twice


class TestArgmax:
    def test_max_wins(self):
        assert argmax_label({"a": 0.2, "b": 0.8}) == "b"

    def test_tie_breaks_lexicographically(self):
        assert argmax_label({"b": 0.5, "a": 0.5}) == "a"

    def test_singleton(self):
        assert argmax_label({"z": 1.0}) == "z"

    def test_empty_rejected(self):
        with pytest.raises(EmptyScores):
            argmax_label({})


class TestBuildDataset:
    def test_ids_assigned_lexicographically(self):
        examples = [
            make_example([("b", 1.0), ("a", 1.0)], CategoricalOutput("x")),
            make_example([("a", 2.0)], CategoricalOutput("x")),
            make_example([("b", 3.0)], CategoricalOutput("y")),
        ]
        ds = build_dataset(InMemoryDataSource(examples))
        assert ds.feature_domain.id_of("a") == 0
        assert ds.feature_domain.id_of("b") == 1

    def test_population_statistics(self):
        examples = [make_example([("a", v)], CategoricalOutput("x")) for v in (1.0, 2.0, 3.0)]
        ds = build_dataset(InMemoryDataSource(examples))
        info = ds.feature_domain["a"]
        assert info.mean == pytest.approx(2.0, abs=1e-12)
        assert info.variance == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert (info.min, info.max, info.count) == (1.0, 3.0, 3)

    def test_mixed_outputs_rejected(self):
        examples = [
            make_example([("a", 1.0)], CategoricalOutput("x")),
            make_example([("a", 2.0)], RealOutput(1.0)),
        ]
        with pytest.raises(MixedOutputTypes):
            build_dataset(InMemoryDataSource(examples))

    def test_unlabelled_rejected(self):
        examples = [make_example([("a", 1.0)], UNKNOWN)]
        with pytest.raises(UnlabelledExample):
            build_dataset(InMemoryDataSource(examples))

    def test_empty_source_rejected(self):
        with pytest.raises(EmptySource):
            build_dataset(InMemoryDataSource([]))

    def test_statistics_match_bruteforce_second_pass(self):
        import random

        rnd = random.Random(7)
        examples = []
        for _ in range(200):
            pairs = [(name, rnd.uniform(-50, 50)) for name in "abcde" if rnd.random() < 0.7]
            if not pairs:
                pairs = [("a", rnd.uniform(-50, 50))]
            examples.append(make_example(pairs, CategoricalOutput(rnd.choice("xy"))))
        ds = build_dataset(InMemoryDataSource(examples))

        observed: dict[str, list[float]] = {}
        for ex in examples:
            for f in ex.features:
                observed.setdefault(f.name, []).append(f.value)
        for name, values in observed.items():
            info = ds.feature_domain[name]
            mean = sum(values) / len(values)
            var = sum((v - mean) ** 2 for v in values) / len(values)
            assert info.count == len(values)
            assert info.min == min(values) and info.max == max(values)
            assert math.isclose(info.mean, mean, rel_tol=1e-12, abs_tol=1e-12)
            assert math.isclose(info.variance, var, rel_tol=1e-12, abs_tol=1e-12)

    def test_output_domain_counts(self):
        examples = [
            make_example([("a", 1.0)], CategoricalOutput(l)) for l in ("x", "x", "y")
        ]
        ds = build_dataset(InMemoryDataSource(examples))
        assert ds.output_domain.counts == {"x": 2, "y": 1}
        assert sum(ds.output_domain.counts.values()) == len(ds.examples)


class _StubModel(Model):
    """Echoes back which feature ids the contract layer hands it."""

    model_class = "test.Stub"

    def __init__(self, feature_domain, output_domain):
        prov = object_provenance("test.Stub")
        super().__init__("stub", prov, feature_domain, output_domain)
        self.seen_ids: list[set[int]] = []

    def _predict_intersected(self, example, sparse):
        self.seen_ids.append(set(sparse))
        labels = self.output_domain.labels()
        scores = {label: (1.0 if i == 0 else 0.0) for i, label in enumerate(labels)}
        return CategoricalOutput(labels[0]), scores


def _stub_over(names_with_range):
    infos = {
        name: FeatureInfo(i, 3, lo, hi, (lo + hi) / 2, 1.0)
        for i, (name, lo, hi) in enumerate(sorted(names_with_range))
    }
    domain = FeatureDomain(infos)
    return _StubModel(domain, CategoricalDomain({"x": 2, "y": 1}))


class TestPredictContract:
    def test_no_overlap_raises(self):
        model = _stub_over([("f1", 0.0, 1.0), ("f2", 0.0, 1.0)])
        with pytest.raises(NoFeatureOverlap):
            model.predict(make_example([("f3", 1.0)]))

    def test_unseen_features_dropped_and_counted(self):
        model = _stub_over([("f1", 0.0, 1.0), ("f2", 0.0, 1.0)])
        pred = model.predict(make_example([("f1", 1.0), ("f3", 5.0)]))
        assert pred.features_used == 1
        assert pred.features_total == 2

    def test_out_of_range_warning(self):
        model = _stub_over([("f1", 0.0, 1.0)])
        pred = model.predict(make_example([("f1", 7.0)]))
        assert "out-of-range:f1" in pred.warnings

    def test_boundary_values_do_not_warn(self):
        model = _stub_over([("f1", 0.0, 1.0)])
        for v in (0.0, 1.0, 0.5):
            assert model.predict(make_example([("f1", v)])).warnings == ()

    def test_never_sees_unknown_feature_ids(self):
        model = _stub_over([("f1", 0.0, 1.0), ("f2", 0.0, 1.0)])
        model.predict(make_example([("f1", 1.0), ("zz", 9.0)]))
        model.predict(make_example([("f2", 2.0)]))
        valid = {0, 1}
        assert all(ids <= valid for ids in model.seen_ids)

    def test_overlap_of_one_feature_is_enough(self):
        model = _stub_over([("f1", 0.0, 1.0), ("f2", 0.0, 1.0)])
        pred = model.predict(make_example([("f2", 0.5), ("other", 1.0)]))
        assert pred.features_used == 1

    def test_expected_task_checked(self):
        model = _stub_over([("f1", 0.0, 1.0)])
        with pytest.raises(OutputTypeMismatch):
            model.predict(make_example([("f1", 0.5)]), expected_task="real")

    def test_module_level_predict(self):
        model = _stub_over([("f1", 0.0, 1.0)])
        pred = predict(model, make_example([("f1", 0.5)]), expected_task=CATEGORICAL)
        assert pred.output == CategoricalOutput("x")


class TestDatasetImmutability:
    def test_examples_are_a_tuple(self, separable_dataset):
        assert isinstance(separable_dataset.examples, tuple)

    def test_example_fields_frozen(self):
        ex = make_example([("a", 1.0)])
        with pytest.raises(Exception):
            ex.weight = 2.0
