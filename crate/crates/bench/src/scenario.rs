//! Scenario configuration, the seeded workload, and the timed rounds.

use std::collections::HashMap;
use std::time::Instant;

use ehrguard::edge::Integrity;
use ehrguard::ledger::AccessOutcome;
use ehrguard::model::ParticipantKind;
use ehrguard_gateway::{NewParticipant, SensorReading};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::client::{Client, ClientError};
use crate::report::{Operation, Sample};
use crate::BenchError;

/// Every uploaded record carries this policy: Christiana doctors may read.
pub const RECORD_POLICY: &str = r#"rule Rule1 {
  description: "Christiana doctors may read patient records"
  subject(v): "Christiana.Doctor"
  operation: READ
  object(t): "Christiana.patient#*.data"
  condition: "v.role == Doctor && v.organization == Christiana"
  action: ALLOW
}"#;

const ORGANIZATION: &str = "Christiana";

/// How patients are spread over doctors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Assignment {
    /// Contiguous runs: with 2 doctors and 5 patients, 1-3 and 4-5.
    #[default]
    Blocks,
    /// Patient i goes to doctor i mod n.
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub n_doctors: usize,
    pub n_patients: usize,
    pub rounds: usize,
    pub seed: u64,
    pub assignment: Assignment,
    /// Parallel requests per round; 1 issues them one after another.
    pub concurrency: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_doctors: 2,
            n_patients: 5,
            rounds: 4,
            seed: 0,
            assignment: Assignment::Blocks,
            concurrency: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let positive = [
            ("nDoctors", self.n_doctors),
            ("nPatients", self.n_patients),
            ("rounds", self.rounds),
            ("concurrency", self.concurrency),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(BenchError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn with_patients(&self, n_patients: usize) -> Self {
        ScenarioConfig {
            n_patients,
            ..self.clone()
        }
    }

    /// Index of the doctor patient `p` is assigned to.
    pub fn doctor_of(&self, p: usize) -> usize {
        match self.assignment {
            Assignment::Blocks => p * self.n_doctors / self.n_patients,
            Assignment::RoundRobin => p % self.n_doctors,
        }
    }

    pub fn doctor_id(i: usize) -> String {
        format!("d{}", i + 1)
    }

    pub fn patient_id(i: usize) -> String {
        (i + 1).to_string()
    }
}

fn credential(id: &str) -> String {
    format!("card-{id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pair {
    pub requester: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundPlan {
    /// Each doctor asking for each of their patients.
    pub authorized: Vec<Pair>,
    /// Each patient asking for some other patient.
    pub unauthorized: Vec<Pair>,
}

/// The request pairs of every round. Depends on the config alone, timing
/// never feeds back into it. With one patient there is nobody to probe.
pub fn workload(cfg: &ScenarioConfig) -> Vec<RoundPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut authorized = Vec::with_capacity(cfg.n_patients);
    for d in 0..cfg.n_doctors {
        for p in (0..cfg.n_patients).filter(|&p| cfg.doctor_of(p) == d) {
            authorized.push(Pair {
                requester: ScenarioConfig::doctor_id(d),
                target: ScenarioConfig::patient_id(p),
            });
        }
    }
    (0..cfg.rounds)
        .map(|_| {
            let unauthorized = if cfg.n_patients < 2 {
                Vec::new()
            } else {
                (0..cfg.n_patients)
                    .map(|p| {
                        let mut v = rng.random_range(0..cfg.n_patients - 1);
                        if v >= p {
                            v += 1;
                        }
                        Pair {
                            requester: ScenarioConfig::patient_id(p),
                            target: ScenarioConfig::patient_id(v),
                        }
                    })
                    .collect()
            };
            RoundPlan {
                authorized: authorized.clone(),
                unauthorized,
            }
        })
        .collect()
}

/// Session tokens of everyone registered by [`setup`].
#[derive(Debug, Clone, Default)]
pub struct Roster {
    pub tokens: HashMap<String, String>,
}

impl Roster {
    pub fn token(&self, id: &str) -> &str {
        &self.tokens[id]
    }
}

fn participant(id: String, kind: ParticipantKind, n: usize, doctors: Vec<String>) -> NewParticipant {
    let (first, last) = match kind {
        ParticipantKind::Doctor => ("Doctor", format!("No{n}")),
        _ => ("Patient", format!("No{n}")),
    };
    NewParticipant {
        credential_id: credential(&id),
        id,
        kind,
        first_name: first.into(),
        last_name: last,
        role: None,
        organization: ORGANIZATION.into(),
        doctors,
    }
}

/// Registers everyone, logs them in, and gives each patient one record.
pub fn setup(client: &dyn Client, cfg: &ScenarioConfig) -> Result<Roster, BenchError> {
    cfg.validate()?;
    let fail = |what: &str, e: ClientError| BenchError::SetupFailure(format!("{what}: {e}"));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut roster = Roster::default();
    for d in 0..cfg.n_doctors {
        let id = ScenarioConfig::doctor_id(d);
        client
            .register(&participant(id.clone(), ParticipantKind::Doctor, d + 1, vec![]))
            .map_err(|e| fail(&format!("register {id}"), e))?;
        let s = client.login(&id, &credential(&id)).map_err(|e| fail(&format!("login {id}"), e))?;
        roster.tokens.insert(id, s.token);
    }
    for p in 0..cfg.n_patients {
        let id = ScenarioConfig::patient_id(p);
        let doctor = ScenarioConfig::doctor_id(cfg.doctor_of(p));
        client
            .register(&participant(id.clone(), ParticipantKind::Patient, p + 1, vec![doctor]))
            .map_err(|e| fail(&format!("register {id}"), e))?;
        let s = client.login(&id, &credential(&id)).map_err(|e| fail(&format!("login {id}"), e))?;
        let bpm = rng.random_range(55..=100) as f64;
        client
            .ingest(&s.token, &SensorReading::new(&id, "pulse", bpm, "bpm"))
            .map_err(|e| fail(&format!("reading for {id}"), e))?;
        client
            .finalize(&s.token, RECORD_POLICY)
            .map_err(|e| fail(&format!("record for {id}"), e))?;
        roster.tokens.insert(id, s.token);
    }
    Ok(roster)
}

fn millis(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

/// Times one request. Authorized ones must be granted and then fetch an
/// intact record; unauthorized ones must be refused with `NotAuthorized`.
fn timed(client: &dyn Client, roster: &Roster, pair: &Pair, op: Operation) -> Result<f64, BenchError> {
    let token = roster.token(&pair.requester);
    let start = Instant::now();
    let got = client.request(token, &pair.target);
    let elapsed = millis(start);
    let label = format!("{} -> {}", pair.requester, pair.target);
    match (op, got) {
        (Operation::Authorized, Ok(g)) => {
            let f = client
                .fetch(&g.url, token)
                .map_err(|e| BenchError::Unexpected(format!("fetch for {label}: {e}")))?;
            if f.integrity != Integrity::Match {
                return Err(BenchError::Unexpected(format!("record for {label} failed its digest check")));
            }
        }
        (Operation::Unauthorized, Err(e)) if e.code == "NotAuthorized" => {}
        (Operation::Authorized, Err(e)) => return Err(BenchError::Unexpected(format!("{label} refused: {e}"))),
        (Operation::Unauthorized, Ok(_)) => return Err(BenchError::Unexpected(format!("{label} was granted"))),
        (Operation::Unauthorized, Err(e)) => return Err(BenchError::Unexpected(format!("{label}: {e}"))),
    }
    Ok(elapsed)
}

fn run_pairs(
    client: &dyn Client,
    roster: &Roster,
    pairs: &[Pair],
    op: Operation,
    population: usize,
    round: usize,
    concurrency: usize,
) -> Result<Vec<Sample>, BenchError> {
    let sample = |elapsed_ms| Sample {
        population,
        round,
        operation: op,
        elapsed_ms,
    };
    if concurrency <= 1 {
        return pairs.iter().map(|p| timed(client, roster, p, op).map(sample)).collect();
    }
    let results: Vec<Result<Vec<Sample>, BenchError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..concurrency)
            .map(|k| {
                s.spawn(move || {
                    pairs
                        .iter()
                        .skip(k)
                        .step_by(concurrency)
                        .map(|p| timed(client, roster, p, op).map(sample))
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("request thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(pairs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Sets up `cfg` on `client` and runs its rounds. Samples are labelled with
/// `cfg.n_patients` as the population.
pub fn run_scenario(client: &dyn Client, cfg: &ScenarioConfig) -> Result<Vec<Sample>, BenchError> {
    let roster = setup(client, cfg)?;
    let mut samples = Vec::new();
    for (r, plan) in workload(cfg).iter().enumerate() {
        for (pairs, op) in [(&plan.authorized, Operation::Authorized), (&plan.unauthorized, Operation::Unauthorized)] {
            samples.extend(run_pairs(client, &roster, pairs, op, cfg.n_patients, r + 1, cfg.concurrency)?);
        }
    }
    Ok(samples)
}

/// Outcomes on chain after one population's run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tally {
    pub population: usize,
    pub granted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub samples: Vec<Sample>,
    pub tallies: Vec<Tally>,
}

/// Runs `base` once per population, each against a fresh client from
/// `connect`.
pub fn sweep<C: Client>(
    base: &ScenarioConfig,
    populations: &[usize],
    mut connect: impl FnMut(&ScenarioConfig) -> Result<C, BenchError>,
) -> Result<SweepResult, BenchError> {
    if populations.is_empty() {
        return Err(BenchError::Config("no populations given".into()));
    }
    let mut out = SweepResult {
        samples: Vec::new(),
        tallies: Vec::new(),
    };
    for &n in populations {
        let cfg = base.with_patients(n);
        cfg.validate()?;
        let client = connect(&cfg)?;
        out.samples.extend(run_scenario(&client, &cfg)?);
        let events = client
            .events()
            .map_err(|e| BenchError::Unexpected(format!("reading events: {e}")))?;
        out.tallies.push(Tally {
            population: n,
            granted: events.iter().filter(|e| e.outcome == AccessOutcome::Granted).count(),
            rejected: events.iter().filter(|e| e.outcome == AccessOutcome::Rejected).count(),
        });
    }
    Ok(out)
}
