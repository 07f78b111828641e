import numpy as np
import pytest

from abacbandit.data import manual_policy_schema
from abacbandit.featurize import build_feature_space, get_request, get_state
from abacbandit.learners import BanditConfig, BanditLearner
from abacbandit.model import (
    DENY,
    PERMIT,
    AbacRule,
    Attribute,
    AttributeFilter,
    AttributeSchema,
    SchemaError,
)
from abacbandit.warmstart import (
    WarmstartExample,
    apply_warmstart,
    init_from_capability_defaults,
    init_from_general_rules,
    init_from_log,
    init_from_user_defaults,
    load_warmstart_spec,
    merge_examples,
)

CAPS = AttributeSchema(
    attributes=(Attribute("Role", "user", ("parent", "sitter", "guest")),),
    operations=("check_temperature", "unlock_door"),
)


class TestGeneralRules:
    def test_everyone_lights_inside_home_count(self):
        # Unconstrained ranges of m1: Role (5) x Username (7) x Time (4),
        # with Location and the operation fixed: 140 states.
        schema = manual_policy_schema("m1")
        rule = AbacRule(eaf=AttributeFilter.of({"Location": "inside_home"}),
                        operation="lights_on_off", decision=PERMIT)
        examples = init_from_general_rules([rule], schema)
        assert len(examples) == 4 * 5 * 7
        assert all(ex.decision is PERMIT for ex in examples)
        assert all(ex.state.value_of("Location") == "inside_home" for ex in examples)
        assert all(ex.state.operation == "lights_on_off" for ex in examples)

    def test_empty_rule_list(self):
        assert init_from_general_rules([], manual_policy_schema("m1")) == []

    def test_overlapping_rules_dedupe(self):
        schema = manual_policy_schema("m1")
        broad = AbacRule(eaf=AttributeFilter.of({"Location": "inside_home"}),
                         operation="lights_on_off", decision=PERMIT)
        narrow = AbacRule(uaf=AttributeFilter.of({"Role": "mother"}),
                          eaf=AttributeFilter.of({"Location": "inside_home"}),
                          operation="lights_on_off", decision=PERMIT)
        merged = init_from_general_rules([broad, narrow], schema)
        # Set-union oracle: the narrow rule's states are inside the broad one.
        assert len(merged) == len(init_from_general_rules([broad], schema))
        keys = [(ex.state.key(), ex.decision) for ex in merged]
        assert len(set(keys)) == len(keys)

    def test_invalid_rule_rejected(self):
        schema = manual_policy_schema("m1")
        with pytest.raises(SchemaError):
            init_from_general_rules(
                [AbacRule(uaf=AttributeFilter.of({"Time": "day"}))], schema)

    def test_cap_sampling_exact_and_reproducible(self):
        schema = manual_policy_schema("m1")
        rule = AbacRule(decision=PERMIT)  # matches all 5600 states
        a = init_from_general_rules([rule], schema, cap=100, seed=3)
        b = init_from_general_rules([rule], schema, cap=100, seed=3)
        c = init_from_general_rules([rule], schema, cap=100, seed=4)
        assert len(a) == 100
        assert [(x.state.key(), x.decision) for x in a] == [(x.state.key(), x.decision) for x in b]
        assert [x.state.key() for x in a] != [x.state.key() for x in c]


class TestUserDefaults:
    def test_neighbor_denied_everywhere(self):
        schema = manual_policy_schema("m2")
        examples = init_from_user_defaults(
            [(AttributeFilter.of({"Role": "neighbor"}), DENY)], schema)
        assert examples
        assert all(ex.decision is DENY for ex in examples)
        assert all(ex.state.value_of("Role") == "neighbor" for ex in examples)

    def test_disjoint_filters_disjoint_examples(self):
        schema = manual_policy_schema("m2")
        mothers = init_from_user_defaults(
            [(AttributeFilter.of({"Role": "mother"}), PERMIT)], schema, cap=100_000)
        neighbors = init_from_user_defaults(
            [(AttributeFilter.of({"Role": "neighbor"}), DENY)], schema, cap=100_000)
        assert not ({ex.state.key() for ex in mothers}
                    & {ex.state.key() for ex in neighbors})

    def test_conflicting_defaults_rejected(self):
        schema = manual_policy_schema("m2")
        with pytest.raises(ValueError):
            init_from_user_defaults(
                [(AttributeFilter.of({"Role": "neighbor"}), DENY),
                 (AttributeFilter.of({"Role": "neighbor"}), PERMIT)], schema)

    def test_non_user_attribute_rejected(self):
        schema = manual_policy_schema("m2")
        with pytest.raises(SchemaError):
            init_from_user_defaults(
                [(AttributeFilter.of({"Time": "night"}), DENY)], schema)


class TestCapabilityDefaults:
    def test_check_temperature_defaults_to_permit(self):
        examples = init_from_capability_defaults({"check_temperature": PERMIT}, CAPS)
        assert len(examples) == 3
        assert all(ex.decision is PERMIT for ex in examples)
        assert all(ex.state.operation == "check_temperature" for ex in examples)

    def test_unknown_operation_rejected(self):
        with pytest.raises(SchemaError):
            init_from_capability_defaults({"fly": PERMIT}, CAPS)

    def test_two_operations_partition(self):
        examples = init_from_capability_defaults(
            {"check_temperature": PERMIT, "unlock_door": DENY}, CAPS)
        by_op = {}
        for ex in examples:
            by_op.setdefault(ex.state.operation, []).append(ex)
        assert set(by_op) == {"check_temperature", "unlock_door"}
        assert all(e.decision is PERMIT for e in by_op["check_temperature"])
        assert all(e.decision is DENY for e in by_op["unlock_door"])
        assert len(examples) == 6


class TestLogInit:
    def _log(self, n):
        role = CAPS.attribute("Role").values
        out = []
        for i in range(n):
            state_values = (role[i % 3],)
            from abacbandit.featurize import State
            st = State(CAPS, state_values, CAPS.operations[i % 2])
            out.append((get_request(st), PERMIT if i % 2 == 0 else DENY))
        return out

    def test_empty_log(self):
        assert init_from_log([], CAPS) == []

    def test_entries_in_order(self):
        log = self._log(100)
        examples = init_from_log(log, CAPS)
        assert len(examples) == 100
        for (req, dec), ex in zip(log, examples):
            assert ex.state == get_state(req, CAPS)
            assert ex.decision is dec
            assert ex.weight == 1.0

    def test_duplicates_preserved(self):
        log = self._log(6) * 3
        examples = init_from_log(log, CAPS)
        # Frequency oracle: each distinct entry appears three times.
        freq = {}
        for ex in examples:
            freq[(ex.state.key(), ex.decision)] = freq.get((ex.state.key(), ex.decision), 0) + 1
        assert set(freq.values()) == {3}


class TestMerge:
    def test_identical_pairs_sum_weights(self):
        log = TestLogInit()._log(4)
        a = init_from_log(log, CAPS)
        merged = merge_examples(a, a)
        assert len(merged) == 4
        assert all(ex.weight == 2.0 for ex in merged)

    def test_conflicting_decisions_halve_weights(self):
        from abacbandit.featurize import State
        st = State(CAPS, ("parent",), "unlock_door")
        merged = merge_examples([WarmstartExample(st, PERMIT)],
                                [WarmstartExample(st, DENY)])
        assert sorted(ex.decision.value for ex in merged) == ["deny", "permit"]
        assert all(ex.weight == 0.5 for ex in merged)

    def test_merge_commutes_up_to_order(self):
        rules = init_from_general_rules(
            [AbacRule(operation="unlock_door", decision=DENY)], CAPS)
        caps = init_from_capability_defaults({"unlock_door": PERMIT}, CAPS)
        ab = {(e.state.key(), e.decision, e.weight) for e in merge_examples(rules, caps)}
        ba = {(e.state.key(), e.decision, e.weight) for e in merge_examples(caps, rules)}
        assert ab == ba


class TestApplyWarmstart:
    def test_zero_passes_leaves_learner_unchanged(self):
        schema = manual_policy_schema("m1")
        space = build_feature_space(schema)
        learner = BanditLearner(BanditConfig("cover"), space.num_slots)
        examples = init_from_general_rules([AbacRule(decision=PERMIT)], schema, cap=50)
        apply_warmstart(learner, examples, space, passes=0)
        assert not learner.weights.any()

    def test_round_zero_greedy_matches_majority_label(self):
        # Majority oracle: per covered state, the greedy action after warm
        # start must be that state's majority warm-start label.
        schema = CAPS
        space = build_feature_space(schema)
        learner = BanditLearner(BanditConfig("epsilon"), space.num_slots)
        examples = init_from_capability_defaults(
            {"check_temperature": PERMIT, "unlock_door": DENY}, schema)
        apply_warmstart(learner, examples, space, passes=5, seed=0)
        majority = {}
        for ex in examples:
            key = ex.state.key()
            majority[key] = majority.get(key, 0) + (1 if ex.decision is PERMIT else -1)
        for ex in examples:
            want = 0 if majority[ex.state.key()] > 0 else 1
            assert learner.greedy_action(space.encode(ex.state)) == want

    def test_deterministic_given_seed(self):
        schema = manual_policy_schema("m1")
        space = build_feature_space(schema)
        examples = init_from_general_rules([AbacRule(decision=PERMIT)], schema,
                                           cap=500, seed=1)
        a = BanditLearner(BanditConfig("epsilon"), space.num_slots)
        b = BanditLearner(BanditConfig("epsilon"), space.num_slots)
        apply_warmstart(a, examples, space, passes=2, seed=9)
        apply_warmstart(b, examples, space, passes=2, seed=9)
        assert np.array_equal(a.weights, b.weights)

    def test_weights_only_no_space_change(self):
        space = build_feature_space(CAPS)
        learner = BanditLearner(BanditConfig("bag", n_bags=3), space.num_slots)
        shape = learner.weights.shape
        examples = init_from_capability_defaults({"unlock_door": DENY}, CAPS)
        apply_warmstart(learner, examples, space)
        assert learner.weights.shape == shape
        assert learner.weights.any()


class TestSpecFile:
    def test_four_sections(self, tmp_path):
        from abacbandit.data import save_log
        schema = CAPS
        log = TestLogInit()._log(10)
        log_path = tmp_path / "past.csv"
        save_log(log, schema, log_path)
        spec = {
            "general_rules": [{"uaf": {"Role": "parent"}, "op": "*", "decision": "permit"}],
            "user_defaults": [{"filter": {"Role": "guest"}, "decision": "deny"}],
            "capability_defaults": {"check_temperature": "permit"},
            "log_path": str(log_path),
        }
        import json
        spec_path = tmp_path / "ws.json"
        spec_path.write_text(json.dumps(spec))
        examples = load_warmstart_spec(spec_path, schema)
        assert examples
        ops = {ex.state.operation for ex in examples}
        assert "check_temperature" in ops
        roles = {ex.state.value_of("Role") for ex in examples}
        assert {"parent", "guest"} <= roles
