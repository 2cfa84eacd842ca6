import numpy as np
import pytest

from steerlab import (
    Attribute,
    AttributeSchema,
    Component,
    Condition,
    InfeasibleConditionError,
    MixtureWorld,
    TargetDistribution,
    WorldValidationError,
    conditional_components,
    embed_condition,
    make_condition,
)

from conftest import build_gender_world, single_gaussian_world, two_attribute_world


def make_component(concept="engineer", gender="male", mean=(0.0, 0.0), weight=0.5,
                   cov=None):
    return Component(
        mean=np.array(mean, dtype=float),
        covariance=np.eye(2) if cov is None else np.array(cov, dtype=float),
        weight=weight,
        concept=concept,
        tags={"gender": gender},
    )


GENDER = AttributeSchema([Attribute("gender", ("male", "female"))])


class TestAttributeSchema:
    def test_duplicate_attribute_names_rejected(self):
        with pytest.raises(WorldValidationError, match="duplicate attribute"):
            AttributeSchema([Attribute("a", ("x", "y")), Attribute("a", ("p", "q"))])

    def test_attribute_needs_two_values(self):
        with pytest.raises(WorldValidationError, match="at least 2"):
            AttributeSchema([Attribute("gender", ("male",))])

    def test_duplicate_values_rejected(self):
        with pytest.raises(WorldValidationError, match="duplicate value"):
            AttributeSchema([Attribute("gender", ("male", "male"))])

    def test_empty_schema_is_allowed(self):
        schema = AttributeSchema([])
        assert schema.names() == ()

    def test_values_of_unknown_attribute(self):
        with pytest.raises(WorldValidationError, match="unknown attribute"):
            GENDER.values_of("age")

    def test_digest_is_order_sensitive_and_stable(self):
        a = AttributeSchema([Attribute("g", ("m", "f")), Attribute("a", ("y", "o"))])
        b = AttributeSchema([Attribute("g", ("m", "f")), Attribute("a", ("y", "o"))])
        c = AttributeSchema([Attribute("a", ("y", "o")), Attribute("g", ("m", "f"))])
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()


class TestMixtureWorldValidation:
    def test_weights_are_normalized(self):
        world = MixtureWorld(2, GENDER, [
            make_component(gender="male", weight=2.0),
            make_component(gender="female", mean=(1, 0), weight=2.0),
        ])
        assert sum(c.weight for c in world.components) == pytest.approx(1.0)
        assert world.components[0].weight == pytest.approx(0.5)

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(WorldValidationError, match="weight"):
            MixtureWorld(2, GENDER, [
                make_component(weight=0.0),
                make_component(gender="female", weight=1.0),
            ])

    def test_wrong_mean_dimension_rejected(self):
        bad = Component(np.zeros(3), np.eye(3), 1.0, "engineer", {"gender": "male"})
        ok = make_component(gender="female")
        with pytest.raises(WorldValidationError, match="mean shape"):
            MixtureWorld(2, GENDER, [bad, ok])

    def test_asymmetric_covariance_rejected(self):
        with pytest.raises(WorldValidationError, match="symmetric"):
            MixtureWorld(2, GENDER, [
                make_component(cov=[[1.0, 0.5], [0.0, 1.0]]),
                make_component(gender="female"),
            ])

    def test_non_positive_definite_covariance_rejected(self):
        with pytest.raises(WorldValidationError, match="positive definite"):
            MixtureWorld(2, GENDER, [
                make_component(cov=[[1.0, 2.0], [2.0, 1.0]]),
                make_component(gender="female"),
            ])

    def test_unknown_tag_value_rejected(self):
        with pytest.raises(WorldValidationError, match="unknown value"):
            MixtureWorld(2, GENDER, [
                make_component(gender="robot"),
                make_component(gender="female"),
            ])

    def test_tags_must_cover_schema_exactly(self):
        untagged = Component(np.zeros(2), np.eye(2), 0.5, "engineer", {})
        with pytest.raises(WorldValidationError, match="gender"):
            MixtureWorld(2, GENDER, [untagged, make_component(gender="female")])

    def test_missing_value_coverage_diagnostic_names_the_gap(self):
        with pytest.raises(WorldValidationError) as err:
            MixtureWorld(2, GENDER, [
                make_component(concept="engineer", gender="male"),
                make_component(concept="teacher", gender="male", mean=(0, 4)),
                make_component(concept="teacher", gender="female", mean=(4, 4)),
            ])
        message = str(err.value)
        assert "engineer" in message
        assert "gender='female'" in message
        assert "infeasible" in message

    def test_arrays_are_frozen(self):
        world = build_gender_world()
        with pytest.raises(ValueError):
            world.components[0].mean[0] = 99.0

    def test_concepts_in_first_seen_order(self):
        world = build_gender_world()
        assert world.concepts == ("engineer", "teacher")

    def test_min_concept_separation(self):
        world = build_gender_world(male_weight=0.5, separation=4.0, concept_gap=6.0)
        # centroids: engineer (2, 0) vs teacher (2, 6)
        assert world.min_concept_separation() == pytest.approx(6.0)

    def test_single_concept_has_no_separation(self):
        assert single_gaussian_world().min_concept_separation() is None

    def test_digest_distinguishes_worlds(self):
        a = build_gender_world(male_weight=0.5)
        b = build_gender_world(male_weight=0.6)
        assert a.digest() != b.digest()
        assert a.digest() == build_gender_world(male_weight=0.5).digest()


class TestConditioning:
    def test_concept_filter_and_renormalization(self):
        world = build_gender_world(male_weight=0.65)
        mix = conditional_components(world, Condition("engineer", {}, np.zeros(2)))
        assert len(mix.components) == 2
        assert mix.weights.sum() == pytest.approx(1.0)
        # engineer male share: 0.325 / 0.5
        assert sorted(mix.weights) == pytest.approx(sorted([0.65, 0.35]))

    def test_constraint_filter(self):
        world = build_gender_world()
        cond = Condition("engineer", {"gender": "female"}, np.zeros(2))
        mix = conditional_components(world, cond)
        assert len(mix.components) == 1
        assert mix.components[0].tags["gender"] == "female"
        assert mix.weights[0] == pytest.approx(1.0)

    def test_unknown_concept_raises(self):
        world = build_gender_world()
        with pytest.raises(InfeasibleConditionError, match="nurse"):
            conditional_components(world, Condition("nurse", {}, np.zeros(2)))

    def test_infeasible_constraint_names_the_culprit(self):
        world = two_attribute_world()
        cond = Condition("worker", {"age": "old", "gender": "male"}, np.zeros(2))
        with pytest.raises(InfeasibleConditionError) as err:
            conditional_components(world, cond)
        # constraints are applied in sorted-name order, so age=old still leaves
        # a component and gender=male is the one that empties the slice
        assert "gender='male'" in str(err.value)

    def test_conditional_mixtures_are_cached(self):
        world = build_gender_world()
        cond = Condition("engineer", {}, np.zeros(2))
        assert conditional_components(world, cond) is conditional_components(world, cond)

    def test_make_condition_validates_eagerly(self):
        world = two_attribute_world()
        with pytest.raises(InfeasibleConditionError):
            make_condition(world, "worker", {"gender": "male", "age": "old"})
        with pytest.raises(WorldValidationError, match="unknown value"):
            make_condition(world, "worker", {"gender": "robot"})

    def test_make_condition_embedding_shape_checked(self):
        world = build_gender_world()
        with pytest.raises(WorldValidationError, match="finite vector"):
            make_condition(world, "engineer", {}, embedding=np.zeros(3))


class TestEmbedding:
    def test_zero_jitter_gives_exact_weighted_centroid(self):
        # equal weights, means (4,0) and (0,0) -> centroid (2,0)
        world = build_gender_world(male_weight=0.5, separation=4.0)
        emb = embed_condition(world, "engineer", jitter_seed=0, jitter_scale=0.0)
        np.testing.assert_allclose(emb, [2.0, 0.0], atol=1e-12)

    def test_weighted_centroid_respects_weights(self):
        world = build_gender_world(male_weight=0.65, separation=4.0)
        emb = embed_condition(world, "engineer", jitter_seed=0, jitter_scale=0.0)
        np.testing.assert_allclose(emb, [4.0 * 0.65, 0.0], atol=1e-12)

    def test_jitter_is_seed_deterministic(self):
        world = build_gender_world()
        a = embed_condition(world, "engineer", jitter_seed=7, jitter_scale=0.5)
        b = embed_condition(world, "engineer", jitter_seed=7, jitter_scale=0.5)
        c = embed_condition(world, "engineer", jitter_seed=8, jitter_scale=0.5)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_unknown_concept(self):
        with pytest.raises(InfeasibleConditionError):
            embed_condition(build_gender_world(), "nurse", jitter_seed=0)


class TestTargetDistribution:
    def test_valid_target(self):
        t = TargetDistribution({"gender": {"male": 0.3, "female": 0.7}})
        assert t.of("gender", "male") == pytest.approx(0.3)

    def test_must_sum_to_one(self):
        with pytest.raises(WorldValidationError, match="sum"):
            TargetDistribution({"gender": {"male": 0.3, "female": 0.6}})

    def test_no_negative_mass(self):
        with pytest.raises(WorldValidationError, match="negative"):
            TargetDistribution({"gender": {"male": -0.1, "female": 1.1}})

    def test_degenerate_point_mass_is_legal(self):
        t = TargetDistribution({"gender": {"male": 1.0, "female": 0.0}})
        assert t.of("gender", "female") == 0.0

    def test_validate_for_rejects_value_mismatch(self):
        t = TargetDistribution({"gender": {"male": 0.5, "robot": 0.5}})
        with pytest.raises(WorldValidationError, match="gender"):
            t.validate_for(GENDER)

    def test_validate_for_rejects_unknown_attribute(self):
        t = TargetDistribution({"age": {"young": 0.5, "old": 0.5}})
        with pytest.raises(WorldValidationError, match="age"):
            t.validate_for(GENDER)
