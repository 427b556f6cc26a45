mod support;

use ehrguard::acl::{self, check, parse_rules, rules_to_source, validate_rules, AclAction, AclRule, DiagnosticKind, Verb};
use ehrguard::model::{AclObject, ParticipantKind, ParticipantRecord};
use proptest::prelude::*;
use support::*;

fn participant(p: &OParticipant) -> ParticipantRecord {
    let kind = if p.doctor { ParticipantKind::Doctor } else { ParticipantKind::Patient };
    let mut r = ParticipantRecord::new(&p.id, kind, "F", "L", &p.organization, format!("card-{}", p.id));
    r.role = p.role.clone();
    r
}

fn object(o: &OObject) -> AclObject {
    let mut a = AclObject::new(&o.organization, &o.patient_id);
    a.assigned_doctor_ids.extend(o.assigned.iter().cloned());
    a
}

fn verb(v: &str) -> Verb {
    Verb::from_name(v).unwrap()
}

fn parsed(rules: &[OAclRule]) -> Vec<AclRule> {
    if rules.is_empty() {
        return Vec::new();
    }
    let src: String = rules.iter().map(OAclRule::render).collect();
    parse_rules(&src).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

/// Every participant and object the generators can produce, minus some
/// assignment subsets.
fn universe() -> (Vec<OParticipant>, Vec<OObject>) {
    let mut ps = Vec::new();
    for id in 0..4 {
        for doctor in [false, true] {
            for org in ORGS {
                for role in ["Doctor", "Patient", "Nurse"] {
                    ps.push(OParticipant {
                        id: if doctor { format!("d{id}") } else { id.to_string() },
                        doctor,
                        organization: org.to_string(),
                        role: role.to_string(),
                    });
                }
            }
        }
    }
    let mut os = Vec::new();
    for org in ORGS {
        for pid in 0..4 {
            for assigned in [vec![], vec!["d0".to_string()], vec!["d1".to_string(), "d3".to_string()]] {
                os.push(OObject {
                    organization: org.to_string(),
                    patient_id: pid.to_string(),
                    assigned,
                });
            }
        }
    }
    (ps, os)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn first_match_agrees_with_reference(
        rules in arb_acl_rules(6),
        p in arb_participant(),
        o in arb_object(),
        v in prop::sample::select(VERBS.to_vec()),
    ) {
        let lib = parsed(&rules);
        let got = check(&participant(&p), verb(v), &object(&o), &lib) == AclAction::Allow;
        prop_assert_eq!(got, oacl_check(&rules, &p, v, &o));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rule_sets_round_trip(rules in arb_acl_rules(6)) {
        prop_assume!(!rules.is_empty());
        let lib = parsed(&rules);
        prop_assert_eq!(parse_rules(&rules_to_source(&lib)).unwrap(), lib);
    }

    #[test]
    fn rules_for_other_verbs_never_matter(
        rules in arb_acl_rules(6),
        p in arb_participant(),
        o in arb_object(),
        v in prop::sample::select(VERBS.to_vec()),
    ) {
        let lib = parsed(&rules);
        let only: Vec<AclRule> = rules.iter().filter(|r| r.verb == v).cloned().collect::<Vec<_>>()
            .iter().map(|r| parsed(std::slice::from_ref(r)).remove(0)).collect();
        let (p, o) = (participant(&p), object(&o));
        prop_assert_eq!(check(&p, verb(v), &o, &lib), check(&p, verb(v), &o, &only));
    }

    #[test]
    fn rules_flagged_unreachable_never_decide(rules in arb_acl_rules(6)) {
        let lib = parsed(&rules);
        let Err(diags) = validate_rules(&lib) else { return Ok(()) };
        let (ps, os) = universe();
        for d in diags {
            let DiagnosticKind::Unreachable { .. } = d.kind else { continue };
            let dead = &lib[d.position - 1];
            for p in &ps {
                let p = participant(p);
                for o in &os {
                    let o = object(o);
                    for v in Verb::ALL {
                        let decided = acl::decide(&p, v, &o, &lib);
                        prop_assert!(!decided.is_some_and(|r| std::ptr::eq(r, dead)), "{} decided", dead.id);
                    }
                }
            }
        }
    }
}

#[test]
fn empty_rule_set_denies_everything() {
    let (ps, os) = universe();
    for p in &ps {
        for o in &os {
            for v in Verb::ALL {
                assert_eq!(check(&participant(p), v, &object(o), &[]), AclAction::Deny);
            }
        }
    }
}

#[test]
fn default_rules_match_their_reference_reading() {
    let rules = acl::default_rules();
    assert!(validate_rules(&rules).is_ok());
    let (ps, os) = universe();
    for p in &ps {
        for o in &os {
            let read = check(&participant(p), Verb::Read, &object(o), &rules) == AclAction::Allow;
            let update = check(&participant(p), Verb::Update, &object(o), &rules) == AclAction::Allow;
            let write = check(&participant(p), Verb::Write, &object(o), &rules) == AclAction::Allow;
            let own = !p.doctor && p.id == o.patient_id;
            let assigned = p.doctor && o.assigned.contains(&p.id);
            assert_eq!(read, own || assigned, "{p:?} {o:?}");
            assert_eq!(update, own, "{p:?} {o:?}");
            assert!(!write);
        }
    }
}
