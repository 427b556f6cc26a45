mod support;

use std::sync::{Arc, Barrier};

use ehrguard::clock::ManualClock;
use ehrguard::digest::compute_digest;
use ehrguard::edge::{EdgeError, EdgeNode, EdgeOptions, Integrity, MemoryStore, PayloadStore};
use ehrguard::lang::{parse, Value};
use ehrguard::ledger::Ledger;
use ehrguard::model::{ParticipantKind, ParticipantRecord};
use ehrguard::pdp::{AccessRequest, Category};
use proptest::prelude::*;
use sha3::{Digest as _, Sha3_256};
use support::*;

const ALLOW_DOCTORS: &str = "policy Open { rule R { permit target subject.role == \"Doctor\" } }";

struct Rig {
    ledger: Arc<Ledger>,
    store: MemoryStore,
    node: EdgeNode,
}

fn rig(seed: u64) -> Rig {
    let clock = Arc::new(ManualClock::new(1_000));
    let ledger = Arc::new(Ledger::new(clock.clone()));
    ledger
        .register_participant(ParticipantRecord::new("d1", ParticipantKind::Doctor, "D", "One", "Christiana", "cd1"))
        .unwrap();
    ledger
        .register_participant_with(
            ParticipantRecord::new("7", ParticipantKind::Patient, "P", "Seven", "Christiana", "c7"),
            &["d1".to_string()],
        )
        .unwrap();
    let store = MemoryStore::new();
    let opts = EdgeOptions {
        seed: Some(seed),
        clock,
        ..EdgeOptions::default()
    };
    let node = EdgeNode::with_store(opts, ledger.clone(), Box::new(store.clone()));
    Rig { ledger, store, node }
}

impl Rig {
    fn store(&self, payload: &[u8], policy: &str) -> (String, String) {
        let (r, d) = self.node.store_record_source("7", payload, "text/plain", policy).unwrap();
        if self.ledger.asset("7").is_none() {
            self.ledger.put_asset("7", &r, &d).unwrap();
        } else {
            self.ledger.update_asset("7", "7", &r, &d).unwrap();
        }
        (r, d)
    }

    fn url(&self, r: &str) -> String {
        let ev = self.ledger.retrieve_ehr_address("d1", "7").unwrap().event_id;
        self.node.mint_one_time_url(r, &ev).unwrap()
    }
}

fn doctor() -> AccessRequest {
    AccessRequest::default().with(Category::Subject, "role", "Doctor")
}

fn value(v: &OVal) -> Value {
    match v {
        OVal::B(b) => Value::Bool(*b),
        OVal::I(i) => Value::Int(*i),
        OVal::S(s) => Value::Str(s.clone()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn digest_matches_reference(payload in prop::collection::vec(any::<u8>(), 0..600)) {
        prop_assert_eq!(compute_digest(&payload), hex::encode(Sha3_256::digest(&payload)));
    }

    #[test]
    fn any_single_byte_change_is_tampering(
        payload in prop::collection::vec(any::<u8>(), 1..600),
        pos in any::<prop::sample::Index>(),
        delta in 1u8..=255,
    ) {
        let rig = rig(1);
        let (r, chain) = rig.store(&payload, ALLOW_DOCTORS);
        prop_assert_eq!(rig.node.verify_integrity(&r, &chain).unwrap(), Integrity::Match);

        let slot = rig.node.record(&r).unwrap().slot;
        let mut bad = payload.clone();
        let i = pos.index(bad.len());
        bad[i] = bad[i].wrapping_add(delta);
        rig.store.put(&slot, &bad).unwrap();
        prop_assert_eq!(rig.node.verify_integrity(&r, &chain).unwrap(), Integrity::Tampered);
        let url = rig.url(&r);
        let tampered = matches!(rig.node.redeem(&url, &doctor()), Err(EdgeError::Tampered { .. }));
        prop_assert!(tampered);

        rig.store.put(&slot, &payload).unwrap();
        prop_assert_eq!(rig.node.verify_integrity(&r, &chain).unwrap(), Integrity::Match);
    }

    #[test]
    fn redeem_obeys_the_reference_decision(o in arb_policy(), env in arb_env(), seed in any::<u64>()) {
        // The node consults no attribute source, so everything comes from the request.
        let env = OEnv { request: env.request, pip: Default::default() };
        let rig = rig(seed);
        let (r, _) = rig.store(b"Pulse = 78 bpm", &o.render());
        let doc = parse(&o.render()).unwrap();
        prop_assert_eq!(rig.node.record(&r).unwrap().policy_id, doc.id);

        let mut req = AccessRequest::default();
        for (i, v) in &env.request {
            req.bag_mut(Category::from_name(ATTRS[*i].0).unwrap()).insert(ATTRS[*i].1, value(v));
        }
        let (want, obligations) = o.evaluate(&env);
        let url = rig.url(&r);
        match rig.node.redeem(&url, &req) {
            Ok(got) => {
                prop_assert_eq!(want, ODec::Permit);
                prop_assert_eq!(got.payload, b"Pulse = 78 bpm".to_vec());
                prop_assert_eq!(got.obligations.iter().map(|x| x.id.clone()).collect::<Vec<_>>(), obligations);
            }
            Err(EdgeError::AccessDenied(d)) => prop_assert_ne!(want, ODec::Permit, "{:?}", d),
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
        // Whatever the decision, the URL is spent.
        prop_assert!(matches!(rig.node.redeem(&url, &doctor()), Err(EdgeError::TokenGone)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn concurrent_redeems_release_once(threads in 2usize..16, urls in 1usize..4, seed in any::<u64>()) {
        let rig = Arc::new(rig(seed));
        let (r, _) = rig.store(b"one-time", ALLOW_DOCTORS);
        let urls: Vec<String> = (0..urls).map(|_| rig.url(&r)).collect();
        for url in urls {
            let gate = Arc::new(Barrier::new(threads));
            let handles: Vec<_> = (0..threads)
                .map(|_| {
                    let (rig, gate, url) = (rig.clone(), gate.clone(), url.clone());
                    std::thread::spawn(move || {
                        gate.wait();
                        rig.node.redeem(&url, &doctor())
                    })
                })
                .collect();
            let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
            prop_assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
            prop_assert!(results.iter().filter(|r| r.is_err()).all(|r| matches!(r, Err(EdgeError::TokenGone))));
        }
        prop_assert_eq!(rig.node.outstanding_tokens(), 0);
    }
}
