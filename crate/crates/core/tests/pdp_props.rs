mod support;

use std::collections::HashMap;

use ehrguard::lang::{parse, parse_condition, CombiningAlgorithm, Effect, Value};
use ehrguard::pdp::{combine, eval_condition, evaluate, AccessRequest, Category, Decision, DecisionValue};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use support::*;

fn value(v: &OVal) -> Value {
    match v {
        OVal::B(b) => Value::Bool(*b),
        OVal::I(i) => Value::Int(*i),
        OVal::S(s) => Value::Str(s.clone()),
    }
}

fn category(i: usize) -> Category {
    Category::from_name(ATTRS[i].0).unwrap()
}

fn to_request(env: &OEnv) -> (AccessRequest, HashMap<(Category, String), Value>) {
    let mut req = AccessRequest::default();
    for (i, v) in &env.request {
        req.bag_mut(category(*i)).insert(ATTRS[*i].1, value(v));
    }
    let pip = env
        .pip
        .iter()
        .map(|(i, v)| ((category(*i), ATTRS[*i].1.to_string()), value(v)))
        .collect();
    (req, pip)
}

fn lib(d: ODec) -> DecisionValue {
    match d {
        ODec::Permit => DecisionValue::Permit,
        ODec::Deny => DecisionValue::Deny,
        ODec::NotApplicable => DecisionValue::NotApplicable,
        ODec::Indeterminate => DecisionValue::Indeterminate,
    }
}

const ALGS: [CombiningAlgorithm; 3] = [
    CombiningAlgorithm::DenyOverrides,
    CombiningAlgorithm::PermitOverrides,
    CombiningAlgorithm::FirstApplicable,
];

#[test]
fn combining_matches_truth_table_up_to_length_three() {
    let mut tuples: Vec<Vec<ODec>> = vec![vec![]];
    let mut frontier = tuples.clone();
    for _ in 0..3 {
        frontier = frontier
            .iter()
            .flat_map(|t| {
                ODECS.iter().map(move |d| {
                    let mut n = t.clone();
                    n.push(*d);
                    n
                })
            })
            .collect();
        tuples.extend(frontier.iter().cloned());
    }
    assert_eq!(tuples.len(), 1 + 4 + 16 + 64);
    for (a, alg) in ALGS.iter().enumerate() {
        for t in &tuples {
            let ds: Vec<Decision> = t.iter().map(|d| Decision::of(lib(*d))).collect();
            assert_eq!(combine(&ds, *alg).value, lib(ocombine(a as u8, t)), "{alg:?} {t:?}");
        }
    }
}

#[test]
fn boolean_conditions_over_all_assignments() {
    // Exhaustive over 3 boolean attributes for a fixed sample of trees.
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strat = bool_expr_in(4, &BOOLS);
    for _ in 0..300 {
        let e = strat.new_tree(&mut runner).unwrap().current();
        let cond = parse_condition(&e.render()).unwrap();
        for bits in 0..8u8 {
            let env = OEnv {
                request: (0..3).map(|i| (i, OVal::B(bits & (1 << i) != 0))).collect(),
                pip: Default::default(),
            };
            let (req, pip) = to_request(&env);
            let got = eval_condition(&cond, &req, &pip).ok();
            let want = oeval_bool(&e, &|i| env.lookup(i)).ok();
            assert_eq!(got, want, "{} with {bits:03b}", e.render());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn conditions_agree_with_reference(e in bool_expr(4, 4), env in arb_env()) {
        prop_assert!(e.depth() <= 4);
        let cond = parse_condition(&e.render()).unwrap();
        let (req, pip) = to_request(&env);
        let got = eval_condition(&cond, &req, &pip);
        let want = oeval_bool(&e, &|i| env.lookup(i));
        prop_assert_eq!(got.is_ok(), want.is_ok(), "{}", e.render());
        if let (Ok(g), Ok(w)) = (got, want) {
            prop_assert_eq!(g, w);
        }
    }

    #[test]
    fn policies_agree_with_reference(o in arb_policy(), env in arb_env()) {
        let doc = parse(&o.render()).unwrap();
        let (req, pip) = to_request(&env);
        let got = evaluate(&req, &doc, &pip);
        let (want, obligations) = o.evaluate(&env);
        prop_assert_eq!(got.value, lib(want));
        prop_assert_eq!(got.obligations.iter().map(|x| x.id.clone()).collect::<Vec<_>>(), obligations);
        prop_assert_eq!(evaluate(&req, &doc, &pip), got, "deterministic");
    }

    #[test]
    fn obligations_follow_the_decision(o in arb_policy(), env in arb_env()) {
        let doc = parse(&o.render()).unwrap();
        let (req, pip) = to_request(&env);
        let d = evaluate(&req, &doc, &pip);
        match d.value {
            DecisionValue::Permit => prop_assert!(d.obligations.iter().all(|x| x.fulfill_on == Effect::Permit)),
            DecisionValue::Deny => prop_assert!(d.obligations.iter().all(|x| x.fulfill_on == Effect::Deny)),
            _ => prop_assert!(d.obligations.is_empty()),
        }
    }

    #[test]
    fn adding_a_rule_never_lifts_a_deny(
        mut o in arb_policy_with(4, 3),
        extra in arb_rule(9, 3),
        at in any::<prop::sample::Index>(),
        env in arb_env(),
    ) {
        o.combining = Some(0);
        let (req, pip) = to_request(&env);
        let before = evaluate(&req, &parse(&o.render()).unwrap(), &pip);
        let pos = at.index(o.rules.len() + 1);
        o.rules.insert(pos, extra);
        let after = evaluate(&req, &parse(&o.render()).unwrap(), &pip);
        if before.value == DecisionValue::Deny {
            prop_assert_eq!(after.value, DecisionValue::Deny);
        }
    }
}

#[test]
fn generated_pairs_cover_every_decision() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strat = (arb_policy(), arb_env());
    let mut seen = HashMap::new();
    for _ in 0..1000 {
        let (o, env) = strat.new_tree(&mut runner).unwrap().current();
        *seen.entry(format!("{:?}", o.evaluate(&env).0)).or_insert(0) += 1;
    }
    for d in ODECS {
        assert!(seen.get(&format!("{d:?}")).copied().unwrap_or(0) >= 50, "{seen:?}");
    }
}
