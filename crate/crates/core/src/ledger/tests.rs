use super::*;
use crate::clock::ManualClock;

const DIGEST: &str = "b9b4fa505e6e68f1c087c10e5384213d93bfca3c3fe33e9c183c10a16d9a2643";

fn clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::stepping(1_000, 10))
}

fn patient(id: &str, first: &str, last: &str) -> ParticipantRecord {
    ParticipantRecord::new(id, ParticipantKind::Patient, first, last, "Christiana", format!("card-{id}"))
}

fn doctor(id: &str) -> ParticipantRecord {
    ParticipantRecord::new(id, ParticipantKind::Doctor, "Doc", id, "Christiana", format!("card-{id}"))
}

/// Two doctors and five patients; 1-3 see d1, 4-5 see d2, every patient
/// has an asset.
fn demo() -> Ledger {
    let l = Ledger::new(clock());
    l.register_participant(doctor("d1")).unwrap();
    l.register_participant(doctor("d2")).unwrap();
    let names = [
        ("1", "Tony", "Stark"),
        ("2", "Steve", "Rogers"),
        ("3", "Natasha", "Romanoff"),
        ("4", "David", "Banner"),
        ("5", "Thor", "Odinson"),
    ];
    for (i, (id, f, last)) in names.iter().enumerate() {
        let doc = if i < 3 { "d1" } else { "d2" };
        l.register_participant_with(patient(id, f, last), &[doc.to_string()])
            .unwrap();
        l.put_asset(id, &format!("ref-{id}"), DIGEST).unwrap();
    }
    l
}

#[test]
fn registry_of_seven() {
    let l = demo();
    assert_eq!(l.participants().len(), 7);
    assert_eq!(l.patients_of("d1"), vec!["1", "2", "3"]);
    assert_eq!(l.patients_of("d2"), vec!["4", "5"]);
}

#[test]
fn duplicate_and_missing_fields() {
    let l = demo();
    assert!(matches!(l.register_participant(doctor("d1")), Err(LedgerError::DuplicateId(_))));
    let mut p = patient("9", "A", "B");
    p.first_name.clear();
    assert!(matches!(l.register_participant(p), Err(LedgerError::MissingField("firstName"))));
    assert!(matches!(
        l.register_participant(patient("a.b", "A", "B")),
        Err(LedgerError::InvalidField("id"))
    ));
    let mut p = patient("9", "A", "B");
    p.credential_id = "card-1".into();
    assert!(matches!(l.register_participant(p), Err(LedgerError::DuplicateCredential)));
}

#[test]
fn many_patients_grow_the_chain() {
    let l = Ledger::new(clock());
    let h0 = l.height();
    for i in 0..320 {
        l.register_participant(patient(&format!("p{i}"), "P", "Q")).unwrap();
    }
    assert_eq!(l.participants().len(), 320);
    assert_eq!(l.height(), h0 + 320);
}

#[test]
fn asset_rules() {
    let l = Ledger::new(clock());
    l.register_participant(patient("1", "Tony", "Stark")).unwrap();
    assert_eq!(l.put_asset("1", "R1", DIGEST).unwrap(), "1");
    assert!(matches!(l.put_asset("1", "R2", DIGEST), Err(LedgerError::DuplicateAsset(_))));
    assert!(matches!(l.put_asset("1", "R2", &DIGEST[1..]), Err(LedgerError::BadDigest)));
    assert!(matches!(
        l.put_asset("1", "R2", &DIGEST.to_uppercase()),
        Err(LedgerError::BadDigest)
    ));
    assert!(matches!(l.put_asset("7", "R2", DIGEST), Err(LedgerError::UnknownPatient(_))));
    assert_eq!(l.asset("1").unwrap().capability_ref, "R1");
}

#[test]
fn owner_updates_asset() {
    let l = demo();
    let other = "34d60be32f5abda5cb175a9f6b05c35a999eeafb4ee3c91dfe7d8ca47617040b";
    l.update_asset("1", "1", "ref-1b", other).unwrap();
    assert_eq!(l.asset("1").unwrap().digest_hex, other);
    assert!(l.asset("1").unwrap().assigned_doctor_ids.contains("d1"));
    assert_eq!(l.recorded_digest("ref-1").as_deref(), Some(DIGEST));
    assert_eq!(l.recorded_digest("ref-1b").as_deref(), Some(other));
    assert_eq!(l.recorded_digest("nope"), None);
    assert!(matches!(
        l.update_asset("2", "1", "x", other),
        Err(LedgerError::NotAuthorized { .. })
    ));
    assert!(matches!(
        l.update_asset("d1", "1", "x", other),
        Err(LedgerError::NotAuthorized { .. })
    ));
}

#[test]
fn doctor_retrieves_assigned_patient() {
    let l = demo();
    let r = l.retrieve_ehr_address("d1", "1").unwrap();
    assert_eq!(r.capability_ref, "ref-1");
    assert_eq!(r.digest_hex, DIGEST);
    let ev = l.query_events(&EventFilter::requester("d1"));
    assert_eq!(ev.len(), 1);
    assert_eq!(ev[0].outcome, AccessOutcome::Granted);
    assert_eq!(ev[0].event_id, r.event_id);
    assert_eq!(ev[0].timestamp, r.timestamp);
    assert_eq!(l.event(&r.event_id), Some(ev[0].clone()));
}

#[test]
fn doctor_cannot_retrieve_unassigned_patient() {
    let l = demo();
    assert!(matches!(
        l.retrieve_ehr_address("d1", "4"),
        Err(LedgerError::NotAuthorized { event_id: Some(_) })
    ));
}

#[test]
fn tony_stark_cannot_read_david_banner() {
    let l = demo();
    let err = l.retrieve_ehr_address("1", "4").unwrap_err();
    assert!(matches!(err, LedgerError::NotAuthorized { .. }));
    let ev = l.query_events(&EventFilter::target("4"));
    assert_eq!(ev.len(), 1);
    assert_eq!(ev[0].outcome, AccessOutcome::Rejected);
    assert_eq!(ev[0].requester_id, "1");
    assert!(l.retrieve_ehr_address("1", "1").is_ok());
}

#[test]
fn patient_isolation_survives_permissive_rules() {
    let l = demo();
    l.install_rules_source(
        r#"rule Everyone {
  description: "open"
  subject(v): "ANY"
  operation: READ
  object(t): "ANY"
  condition: NONE
  action: ALLOW
}"#,
    )
    .unwrap();
    assert!(l.retrieve_ehr_address("d1", "4").is_ok());
    assert!(matches!(l.retrieve_ehr_address("1", "4"), Err(LedgerError::NotAuthorized { .. })));
}

#[test]
fn blacklist_toggle() {
    let l = demo();
    l.set_blacklist("d2", true).unwrap();
    let before = l.query_events(&EventFilter::requester("d2")).len();
    assert!(matches!(
        l.retrieve_ehr_address("d2", "4"),
        Err(LedgerError::Blacklisted { event_id: Some(_), .. })
    ));
    let ev = l.query_events(&EventFilter::requester("d2"));
    assert_eq!(ev.len(), before + 1);
    assert_eq!(ev.last().unwrap().outcome, AccessOutcome::Rejected);
    l.set_blacklist("d2", false).unwrap();
    assert!(l.retrieve_ehr_address("d2", "4").is_ok());
    assert!(matches!(l.set_blacklist("nobody", true), Err(LedgerError::UnknownParticipant(_))));
}

#[test]
fn failed_lookups_are_still_logged() {
    let l = demo();
    let h = l.height();
    assert!(matches!(l.retrieve_ehr_address("ghost", "1"), Err(LedgerError::UnknownParticipant(_))));
    assert!(matches!(l.retrieve_ehr_address("d1", "99"), Err(LedgerError::UnknownPatient(_))));
    l.register_participant(patient("6", "No", "Asset")).unwrap();
    assert!(matches!(l.retrieve_ehr_address("6", "6"), Err(LedgerError::NoAsset(_))));
    assert_eq!(l.query_events(&EventFilter::default()).len(), 3);
    assert_eq!(l.height(), h + 4);
}

#[test]
fn query_by_time_range() {
    let l = demo();
    let a = l.retrieve_ehr_address("d1", "1").unwrap();
    let b = l.retrieve_ehr_address("d1", "2").unwrap();
    let c = l.retrieve_ehr_address("d1", "3").unwrap();
    assert!(a.timestamp < b.timestamp && b.timestamp < c.timestamp);
    let mid = l.query_events(&EventFilter::between(b.timestamp, c.timestamp));
    assert_eq!(mid.iter().map(|e| &e.event_id).collect::<Vec<_>>(), vec![&b.event_id, &c.event_id]);
}

#[test]
fn empty_chain_has_no_events() {
    let l = Ledger::new(clock());
    assert!(l.query_events(&EventFilter::default()).is_empty());
    assert_eq!(l.height(), 1);
    let g = l.block(0).unwrap();
    assert_eq!(g.prev_hash, crate::digest::Digest::ZERO);
    assert!(!g.payload.is_empty());
}

#[test]
fn event_ids_are_unique_and_reconstructible() {
    let l = demo();
    let r = l.retrieve_ehr_address("d1", "1").unwrap();
    let height: u64 = r.event_id.split('-').next().unwrap().parse().unwrap();
    let records = codec::decode_records(&l.block(height).unwrap().payload).unwrap();
    assert!(matches!(&records[0], ChainRecord::Access(e) if e.event_id == r.event_id));
}

#[test]
fn invalid_rule_sets_are_refused() {
    let l = demo();
    let mut rules = acl::default_rules();
    rules.push(rules[0].clone());
    assert!(matches!(l.install_rules(&rules), Err(LedgerError::InvalidRules(_))));
    assert_eq!(l.rules(), acl::default_rules());
}

#[test]
fn replay_reproduces_state() {
    let l = demo();
    let _ = l.retrieve_ehr_address("d1", "1");
    let _ = l.retrieve_ehr_address("1", "4");
    l.set_blacklist("d2", true).unwrap();
    let copy = Ledger::from_blocks(l.blocks(), clock()).unwrap();
    assert_eq!(copy.state(), l.state());
    assert_eq!(copy.blocks(), l.blocks());
}

#[test]
fn replay_refuses_tampered_blocks() {
    let l = demo();
    let mut blocks = l.blocks();
    blocks[3].payload[6] ^= 0x20;
    assert!(matches!(Ledger::from_blocks(blocks, clock()), Err(LedgerError::ChainBroken(3))));
}

#[test]
fn file_backed_ledger_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.log");
    let state = {
        let l = Ledger::open(&path, clock()).unwrap();
        l.register_participant(doctor("d1")).unwrap();
        l.register_participant_with(patient("1", "Tony", "Stark"), &["d1".into()])
            .unwrap();
        l.put_asset("1", "ref-1", DIGEST).unwrap();
        l.retrieve_ehr_address("d1", "1").unwrap();
        l.state()
    };
    let l = Ledger::open(&path, clock()).unwrap();
    assert_eq!(l.state(), state);
    assert_eq!(l.verify_chain(), Ok(()));
    l.retrieve_ehr_address("1", "1").unwrap();
    drop(l);
    assert_eq!(read_log(&path).unwrap().len(), 6);
}

#[test]
fn file_byte_flip_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.log");
    {
        let l = Ledger::open(&path, clock()).unwrap();
        for i in 0..5 {
            l.register_participant(patient(&i.to_string(), "A", "B")).unwrap();
        }
    }
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 3;
    bytes[last] ^= 0xff;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(Ledger::open(&path, clock()), Err(LedgerError::ChainBroken(5))));
}

#[test]
fn concurrent_writers_keep_chain_valid() {
    let l = Arc::new(demo());
    std::thread::scope(|s| {
        for t in 0..8 {
            let l = l.clone();
            s.spawn(move || {
                for i in 0..25 {
                    let who = if (t + i) % 2 == 0 { "d1" } else { "1" };
                    let _ = l.retrieve_ehr_address(who, "1");
                }
            });
        }
    });
    assert_eq!(l.query_events(&EventFilter::default()).len(), 200);
    assert_eq!(l.verify_chain(), Ok(()));
    let ids: BTreeSet<_> = l.query_events(&EventFilter::default()).into_iter().map(|e| e.event_id).collect();
    assert_eq!(ids.len(), 200);
}
