//! Latency and throughput comparison of the learned access decision against
//! role- and attribute-based baselines.

mod policy;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::contracts::{
    authorize, resource_memory_key, ContractParams, Effect, PriorityRule, ResourcePattern, RuleStore,
    SubjectPattern, VerifiedPayload,
};
use crate::crypto::{keygen, Digest};
use crate::ledger::{user_memory_key, Memory, RequestInfo, Timestamp, UserRecord};
use crate::model::{
    encode_pair, threshold_decide, DecisionModel, EntityMetadata, Operation, OperationMask,
    SyntheticDataset,
};

pub use policy::{
    abac_check, rbac_check, AbacEffect, AbacPolicy, AbacRule, Cmp, Condition, Operand, RbacPolicy,
    Role,
};

/// Role guard conditions per user attribute.
pub const RBAC_CONDITIONS_PER_ATTRIBUTE: usize = 3;
/// Rule conditions per resource attribute.
pub const ABAC_CONDITIONS_PER_ATTRIBUTE: usize = 6;
pub const RBAC_CLASSES: u32 = 10;
/// Size of the fixed priority rule store on the overhead path.
pub const OVERHEAD_RULES: usize = 10;
const WARMUP: usize = 500;
const BENCH_NOW: Timestamp = 1_700_000_000;

pub const REPORT_HEADER: &str = "engine,threads,scale,n,mean_ns,median_ns,p95_ns,throughput";
pub const DECISIONS_HEADER: &str = "engine,scale,index,user,resource,operation,decision";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("policy line {line}: {reason}")]
    Policy { line: usize, reason: String },
    #[error("unknown engine `{0}`")]
    UnknownEngine(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Engine {
    Dlbac,
    DlbacOverhead,
    Rbac,
    Abac,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::Dlbac, Engine::DlbacOverhead, Engine::Rbac, Engine::Abac];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Dlbac => "dlbac",
            Engine::DlbacOverhead => "dlbac-overhead",
            Engine::Rbac => "rbac",
            Engine::Abac => "abac",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Engine::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| BenchError::UnknownEngine(s.into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchRequest {
    pub user: usize,
    pub resource: usize,
    pub operation: Operation,
}

/// Baseline policies at one scale plus the fixed rule store.
#[derive(Clone, Debug)]
pub struct Policies {
    pub scale: usize,
    pub rbac: RbacPolicy,
    pub abac: AbacPolicy,
    pub rules: RuleStore,
}

impl Policies {
    /// Random policies with `10 * scale` roles and rules.
    pub fn generate(scale: usize, seed: u64, user_keys: &[Digest], n_resources: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x706f6c00 ^ ((scale as u64) << 32));
        let rbac = RbacPolicy::random(&mut rng, scale, RBAC_CONDITIONS_PER_ATTRIBUTE, RBAC_CLASSES);
        let abac = AbacPolicy::random(&mut rng, scale, ABAC_CONDITIONS_PER_ATTRIBUTE);
        Policies {
            scale,
            rbac,
            abac,
            rules: overhead_rules(seed, user_keys, n_resources),
        }
    }
}

/// Rule store independent of scale, so only the baselines grow.
fn overhead_rules(seed: u64, user_keys: &[Digest], n_resources: usize) -> RuleStore {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x72756c65);
    let mut rules = RuleStore::new();
    for i in 0..OVERHEAD_RULES {
        let subject = match user_keys.len() {
            0 => SubjectPattern::Any,
            n => SubjectPattern::User(user_keys[rng.gen_range(0..n)]),
        };
        let resource = ResourcePattern::Id(rng.gen_range(0..n_resources.max(1)) as u32);
        let effect = if rng.gen_bool(0.5) { Effect::Allow } else { Effect::Deny };
        rules
            .insert(PriorityRule {
                ordinal: i as i64,
                subject,
                resource,
                ops: OperationMask::only(Operation::ALL[rng.gen_range(0..4)]),
                effect,
            })
            .expect("ordinals are distinct");
    }
    rules
}

/// Fixed request stream over the dataset's users and resources.
pub struct Bench {
    model: DecisionModel,
    params: ContractParams,
    users: Vec<EntityMetadata>,
    user_keys: Vec<Digest>,
    resources: Vec<EntityMetadata>,
    requests: Vec<BenchRequest>,
    memory: Memory,
    payloads: Vec<VerifiedPayload>,
    seed: u64,
}

impl Bench {
    pub fn new(
        dataset: &SyntheticDataset,
        model: DecisionModel,
        threshold: f64,
        n_requests: usize,
        seed: u64,
    ) -> Result<Self, BenchError> {
        if dataset.users.is_empty() || dataset.resources.is_empty() {
            return Err(BenchError::Invalid("dataset has no users or resources".into()));
        }
        let mut memory = Memory::new();
        let mut user_keys = Vec::with_capacity(dataset.users.len());
        for (i, m) in dataset.users.iter().enumerate() {
            let mut s = [0u8; 32];
            s[..8].copy_from_slice(&seed.to_le_bytes());
            s[8..16].copy_from_slice(&(i as u64).to_le_bytes());
            s[16..20].copy_from_slice(b"bnch");
            let kp = keygen(&s);
            let key = kp.public.key_hash();
            let record = UserRecord {
                public_key: kp.public,
                metadata: *m,
            };
            memory.insert(user_memory_key(&key), serde_json::to_value(record).expect("record"));
            user_keys.push(key);
        }
        for (i, m) in dataset.resources.iter().enumerate() {
            memory.insert(resource_memory_key(i as u32), serde_json::to_value(m).expect("metadata"));
        }

        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x62656e63);
        let requests: Vec<BenchRequest> = (0..n_requests)
            .map(|_| BenchRequest {
                user: rng.gen_range(0..dataset.users.len()),
                resource: rng.gen_range(0..dataset.resources.len()),
                operation: Operation::ALL[rng.gen_range(0..4)],
            })
            .collect();
        let payloads = requests
            .iter()
            .map(|r| VerifiedPayload {
                timestamp: BENCH_NOW,
                user_key: user_keys[r.user],
                user_bits: dataset.users[r.user].encode(),
                request_bits: RequestInfo {
                    resource_id: r.resource as u32,
                    operation: r.operation,
                }
                .to_bits(),
            })
            .collect();
        Ok(Bench {
            model,
            params: ContractParams {
                threshold,
                ..ContractParams::default()
            },
            users: dataset.users.clone(),
            user_keys,
            resources: dataset.resources.clone(),
            requests,
            memory,
            payloads,
            seed,
        })
    }

    pub fn requests(&self) -> &[BenchRequest] {
        &self.requests
    }

    pub fn policies(&self, scale: usize) -> Policies {
        Policies::generate(scale, self.seed, &self.user_keys, self.resources.len())
    }

    /// Decision of `engine` for request `i`.
    pub fn decide(&self, engine: Engine, policies: &Policies, i: usize) -> bool {
        let r = &self.requests[i];
        let user = &self.users[r.user];
        let resource = &self.resources[r.resource];
        match engine {
            Engine::Dlbac => {
                let scores = self.model.infer(&encode_pair(user, resource)).expect("fixed width");
                threshold_decide(&scores, self.params.threshold).allows(r.operation)
            }
            Engine::DlbacOverhead => authorize(
                &self.payloads[i],
                &self.memory,
                &self.model,
                &policies.rules,
                BENCH_NOW,
                &self.params,
            )
            .is_ok(),
            Engine::Rbac => rbac_check(&policies.rbac, user, r.resource as u32, r.operation),
            Engine::Abac => abac_check(&policies.abac, user, resource, r.operation),
        }
    }

    /// Time every request, split into contiguous chunks over `threads`.
    pub fn measure(&self, engine: Engine, policies: &Policies, threads: usize) -> Measurement {
        let threads = threads.max(1);
        let n = self.requests.len();
        for i in 0..n.min(WARMUP) {
            std::hint::black_box(self.decide(engine, policies, i));
        }
        let chunk = n.div_ceil(threads).max(1);
        let start = Instant::now();
        let parts: Vec<Vec<(u64, bool)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .step_by(chunk)
                .map(|lo| {
                    let hi = (lo + chunk).min(n);
                    s.spawn(move || {
                        (lo..hi)
                            .map(|i| {
                                let t = Instant::now();
                                let d = std::hint::black_box(self.decide(engine, policies, i));
                                (t.elapsed().as_nanos() as u64, d)
                            })
                            .collect()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("bench worker")).collect()
        });
        let wall = start.elapsed().as_secs_f64();
        let (latencies, decisions): (Vec<u64>, Vec<bool>) = parts.into_iter().flatten().unzip();
        Measurement {
            stats: TimingStats::from_latencies(engine, threads, policies.scale, &latencies, wall),
            decisions,
        }
    }

    /// Per scale, the repeat with the lowest mean latency. Scales are
    /// interleaved within each repeat so drift affects them alike.
    pub fn sweep(&self, engine: Engine, scales: &[usize], threads: usize, repeats: usize) -> Vec<Measurement> {
        let policies: Vec<Policies> = scales.iter().map(|&s| self.policies(s)).collect();
        let mut best: Vec<Option<Measurement>> = vec![None; scales.len()];
        for _ in 0..repeats.max(1) {
            for (slot, p) in best.iter_mut().zip(&policies) {
                let m = self.measure(engine, p, threads);
                if slot.as_ref().is_none_or(|b| m.stats.mean_ns < b.stats.mean_ns) {
                    *slot = Some(m);
                }
            }
        }
        best.into_iter().map(|m| m.expect("at least one repeat")).collect()
    }

    pub fn decisions_csv(&self, engine: Engine, scale: usize, decisions: &[bool]) -> String {
        let mut out = String::new();
        for (i, (r, d)) in self.requests.iter().zip(decisions).enumerate() {
            out.push_str(&format!(
                "{engine},{scale},{i},{},{},{},{}\n",
                r.user,
                r.resource,
                r.operation,
                if *d { "allow" } else { "deny" }
            ));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Measurement {
    pub stats: TimingStats,
    pub decisions: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingStats {
    pub engine: Engine,
    pub threads: usize,
    pub scale: usize,
    pub n: usize,
    pub mean_ns: f64,
    pub median_ns: u64,
    pub p95_ns: u64,
    /// Requests per second of wall-clock time.
    pub throughput: f64,
}

impl TimingStats {
    pub fn from_latencies(engine: Engine, threads: usize, scale: usize, latencies: &[u64], wall_secs: f64) -> Self {
        let n = latencies.len();
        let mut sorted = latencies.to_vec();
        sorted.sort_unstable();
        let pick = |q: f64| -> u64 {
            if n == 0 {
                0
            } else {
                sorted[((q * n as f64).ceil() as usize).clamp(1, n) - 1]
            }
        };
        TimingStats {
            engine,
            threads,
            scale,
            n,
            mean_ns: if n == 0 {
                0.0
            } else {
                sorted.iter().map(|&x| x as f64).sum::<f64>() / n as f64
            },
            median_ns: pick(0.5),
            p95_ns: pick(0.95),
            throughput: if wall_secs > 0.0 { n as f64 / wall_secs } else { 0.0 },
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.1},{},{},{:.1}",
            self.engine, self.threads, self.scale, self.n, self.mean_ns, self.median_ns, self.p95_ns, self.throughput
        )
    }
}

pub fn emit_report(stats: &[TimingStats]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for s in stats {
        out.push_str(&s.csv_row());
        out.push('\n');
    }
    out
}

pub fn parse_report(text: &str) -> Result<Vec<TimingStats>, BenchError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == REPORT_HEADER => {}
        _ => {
            return Err(BenchError::Policy {
                line: 1,
                reason: "missing report header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let err = |reason: &str| BenchError::Policy {
                line: i + 1,
                reason: reason.into(),
            };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                return Err(err("expected 8 fields"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| err("bad number"));
            Ok(TimingStats {
                engine: f[0].parse()?,
                threads: num(f[1])? as usize,
                scale: num(f[2])? as usize,
                n: num(f[3])? as usize,
                mean_ns: num(f[4])?,
                median_ns: num(f[5])? as u64,
                p95_ns: num(f[6])? as u64,
                throughput: num(f[7])?,
            })
        })
        .collect()
}

/// Mean latency at the largest scale over the smallest.
pub fn scale_ratio(stats: &[TimingStats]) -> Option<f64> {
    let lo = stats.iter().min_by_key(|s| s.scale)?;
    let hi = stats.iter().max_by_key(|s| s.scale)?;
    (lo.mean_ns > 0.0).then(|| hi.mean_ns / lo.mean_ns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_dataset, DecisionModel};

    fn bench(n: usize) -> Bench {
        let data = generate_dataset(20, 10, 3);
        let model = DecisionModel::seeded(&[64, 32, 16, 4], 3).unwrap();
        Bench::new(&data, model, 0.5, n, 9).unwrap()
    }

    #[test]
    fn engine_names_round_trip() {
        for e in Engine::ALL {
            assert_eq!(e.as_str().parse::<Engine>().unwrap(), e);
        }
        assert!("xacml".parse::<Engine>().is_err());
    }

    #[test]
    fn quantiles_of_known_latencies() {
        let lat: Vec<u64> = (1..=100).collect();
        let s = TimingStats::from_latencies(Engine::Rbac, 1, 1, &lat, 1.0);
        assert_eq!(s.median_ns, 50);
        assert_eq!(s.p95_ns, 95);
        assert!((s.mean_ns - 50.5).abs() < 1e-12);
        assert_eq!(s.throughput, 100.0);
    }

    #[test]
    fn report_round_trips() {
        let s = TimingStats::from_latencies(Engine::DlbacOverhead, 4, 10, &[10, 20, 30], 0.5);
        let back = parse_report(&emit_report(std::slice::from_ref(&s))).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].engine, Engine::DlbacOverhead);
        assert_eq!(back[0].median_ns, 20);
        assert!(parse_report("engine\n").is_err());
    }

    #[test]
    fn threads_do_not_change_decisions() {
        let b = bench(300);
        let p = b.policies(2);
        for e in Engine::ALL {
            let one = b.measure(e, &p, 1);
            let four = b.measure(e, &p, 4);
            assert_eq!(one.decisions, four.decisions, "{e}");
            assert_eq!(four.stats.n, 300);
        }
    }

    #[test]
    fn policies_are_deterministic() {
        let b = bench(10);
        assert_eq!(b.policies(3).abac, b.policies(3).abac);
        assert_eq!(b.policies(3).rbac, b.policies(3).rbac);
        assert_eq!(b.policies(1).rules, b.policies(7).rules);
    }
}
