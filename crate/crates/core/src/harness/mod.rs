//! Deterministic in-process simulation of users, validators, contracts and
//! storage driving requests end to end.

mod persist;
mod scenario;
mod tamper;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Mutex;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::contracts::{
    execute_request, resource_state_write, rules_from_memory, rules_state_write, ContractOutput,
    DenialReason, PriorityRule, RuleStore,
};
use crate::crypto::{gen_nonce, hash, keygen, Digest, KeyPair, Nonce, PublicKey};
use crate::ledger::{
    Chain, HistoryFilter, LedgerError, Mempool, RejectReason, RequestInfo, ResourceId, StateWrite,
    Transaction, TxKind,
};
use crate::model::{
    generate_dataset, train, DecisionModel, EntityMetadata, ModelError, Operation,
    SyntheticDataset, ATTRIBUTE_COUNT, ATTRIBUTE_LIMIT,
};
use crate::storage::{open_link, Resource, Storage, MALICIOUS_ROOT_KEY};

pub use persist::{load_world, save_world, PersistError, CONFIG_FILE, RUNTIME_FILE, STORAGE_FILE};
pub use scenario::{find_pair, run_all_scenarios, run_scenario, ScenarioReport, TranscriptEntry};
pub use tamper::{tamper, AttackOutcome, LogMutation, Mutation};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown scenario {0}")]
    UnknownScenario(u32),
    #[error("no suitable (user, resource) pair for scenario {0}")]
    NoPair(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Verdict {
    Allowed,
    Denied(DenialReason),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Allowed => f.write_str("Allowed"),
            Verdict::Denied(r) => write!(f, "Denied({r})"),
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "Allowed" {
            return Ok(Verdict::Allowed);
        }
        s.strip_prefix("Denied(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("bad verdict `{s}`"))?
            .parse()
            .map(Verdict::Denied)
    }
}

impl From<Verdict> for String {
    fn from(v: Verdict) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for Verdict {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserEntry {
    pub keys: KeyPair,
    pub metadata: EntityMetadata,
    pub registered: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Request {
    pub user: usize,
    pub resource: ResourceId,
    pub operation: Operation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RequestOutcome {
    pub request: Request,
    pub verdict: Verdict,
    pub content_hash: Option<Digest>,
    /// Heights of the blocks holding this request's transactions.
    pub heights: Vec<u64>,
    pub acc_req: Transaction,
    pub link: Option<Transaction>,
    pub storage_tx: Option<Transaction>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MaliciousUser {
    pub user_key: Digest,
    pub records: usize,
    /// Access requests by this user on chain that were not followed by a
    /// redemption: the denials visible from chain history alone.
    pub onchain_denials: usize,
    pub banned: bool,
}

/// Simulated deployment: ledger, storage, model and user population.
#[derive(Clone, Debug)]
pub struct World {
    pub(crate) config: Config,
    pub(crate) chain: Chain,
    pub(crate) validators: Vec<KeyPair>,
    pub(crate) admin: KeyPair,
    pub(crate) storage: Storage,
    pub(crate) model: DecisionModel,
    pub(crate) dataset: SyntheticDataset,
    pub(crate) users: Vec<UserEntry>,
    pub(crate) clock: u64,
    pub(crate) rng: ChaCha20Rng,
}

/// Keys and population derived from the seed alone.
pub(crate) struct Identities {
    pub validators: Vec<KeyPair>,
    pub admin: KeyPair,
    pub storage: KeyPair,
    pub users: Vec<UserEntry>,
}

fn next_keypair(rng: &mut ChaCha20Rng) -> KeyPair {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    keygen(&seed)
}

pub(crate) fn identities(config: &Config, dataset: &SyntheticDataset) -> Identities {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0x6b65_7973);
    let validators = (0..config.validator_count).map(|_| next_keypair(&mut rng)).collect();
    let admin = next_keypair(&mut rng);
    let storage = next_keypair(&mut rng);
    let users = dataset
        .users
        .iter()
        .map(|m| UserEntry {
            keys: next_keypair(&mut rng),
            metadata: *m,
            registered: true,
        })
        .collect();
    Identities {
        validators,
        admin,
        storage,
        users,
    }
}

pub(crate) fn runtime_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed ^ 0x7275_6e74)
}

pub(crate) fn resource_content(id: ResourceId, seed: u64) -> Vec<u8> {
    format!("resource {id} of world {seed}").into_bytes()
}

fn rejection_reason(r: RejectReason) -> DenialReason {
    match r {
        RejectReason::Stale => DenialReason::Stale,
        RejectReason::ReplayedNonce => DenialReason::Replay,
        RejectReason::BadSignature | RejectReason::Internal => DenialReason::Unauthenticated,
    }
}

/// Contract result for one access request processed inside a block.
#[derive(Clone, Debug)]
struct Processed {
    height: u64,
    verdict: Result<crate::contracts::AccessList, DenialReason>,
}

pub fn setup_world(
    n_validators: usize,
    n_users: usize,
    n_resources: usize,
    seed: u64,
) -> Result<World, HarnessError> {
    let config = Config {
        validator_count: n_validators,
        n_users,
        n_resources,
        seed,
        ..Config::default()
    };
    World::new(config)
}

impl World {
    pub fn new(config: Config) -> Result<World, HarnessError> {
        if config.validator_count < crate::ledger::MIN_VALIDATORS {
            return Err(HarnessError::Config(format!(
                "validator count must exceed 2, got {}",
                config.validator_count
            )));
        }
        if config.n_users == 0 || config.n_resources == 0 {
            return Err(HarnessError::Config("need at least one user and one resource".into()));
        }
        let dataset = generate_dataset(config.n_users, config.n_resources, config.seed);
        let model = train(&dataset, &config.train_config())?;
        World::with_model(config, dataset, model)
    }

    /// Build the world around an already trained model.
    pub fn with_model(
        config: Config,
        dataset: SyntheticDataset,
        model: DecisionModel,
    ) -> Result<World, HarnessError> {
        let ids = identities(&config, &dataset);
        let chain = Chain::genesis(
            ids.validators.iter().map(|k| k.public).collect(),
            ids.admin.public,
            ids.storage.public,
            config.start_time,
        )?;
        let mut storage = Storage::new(ids.storage, config.storage_params(), config.seed);
        for (id, metadata) in dataset.resources.iter().enumerate() {
            let id = id as ResourceId;
            storage
                .put_resource(Resource {
                    id,
                    metadata: *metadata,
                    content: resource_content(id, config.seed),
                })
                .expect("ids are unique");
        }
        let mut world = World {
            clock: config.start_time,
            rng: runtime_rng(config.seed),
            config,
            chain,
            validators: ids.validators,
            admin: ids.admin,
            storage,
            model,
            dataset,
            users: ids.users,
        };
        world.register_population()?;
        Ok(world)
    }

    fn register_population(&mut self) -> Result<(), HarnessError> {
        let mempool = Mempool::new(self.config.freshness_window);
        for u in &self.users {
            let tx = Transaction::setup(&self.admin, u.keys.public, u.metadata, self.clock);
            let admitted = mempool.submit(&self.chain, tx, self.clock);
            debug_assert!(admitted.is_accepted());
        }
        let mut writes: Vec<StateWrite> = self
            .storage
            .resources()
            .map(|r| resource_state_write(r.id, &r.metadata))
            .collect();
        writes.push(rules_state_write(&RuleStore::new()));
        self.commit_block(Vec::new(), writes)?;
        while !mempool.is_empty() {
            self.process_block(&mempool)?;
        }
        Ok(())
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn model(&self) -> &DecisionModel {
        &self.model
    }

    pub fn dataset(&self) -> &SyntheticDataset {
        &self.dataset
    }

    pub fn users(&self) -> &[UserEntry] {
        &self.users
    }

    pub fn user(&self, index: usize) -> &UserEntry {
        &self.users[index]
    }

    pub fn validators(&self) -> &[KeyPair] {
        &self.validators
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn advance_clock(&mut self, seconds: u64) {
        self.clock += seconds;
    }

    pub fn rules(&self) -> RuleStore {
        rules_from_memory(self.chain.memory()).expect("rules written by this world are valid")
    }

    pub fn registered_count(&self) -> usize {
        self.users.iter().filter(|u| u.registered).count()
    }

    pub fn user_index(&self, key_hash: &Digest) -> Option<usize> {
        self.users.iter().position(|u| u.keys.public.key_hash() == *key_hash)
    }

    /// A user with fresh keys and random attributes who never gets a Setup.
    pub fn add_unregistered_user(&mut self) -> usize {
        let keys = next_keypair(&mut self.rng);
        let mut attrs = [0u8; ATTRIBUTE_COUNT];
        for a in &mut attrs {
            *a = self.rng.gen_range(0..ATTRIBUTE_LIMIT);
        }
        self.users.push(UserEntry {
            keys,
            metadata: EntityMetadata::new(attrs).expect("in range"),
            registered: false,
        });
        self.users.len() - 1
    }

    /// Append a priority rule through a contract-state write.
    pub fn inject_rule(&mut self, mut rule: PriorityRule) -> Result<PriorityRule, HarnessError> {
        let mut rules = self.rules();
        rule.ordinal = rules.next_ordinal();
        rules.insert(rule).expect("fresh ordinal");
        self.commit_block(Vec::new(), vec![rules_state_write(&rules)])?;
        Ok(rule)
    }

    fn proposer(&self) -> &KeyPair {
        let h = self.chain.next_height();
        &self.validators[self.chain.authority().scheduled(h)]
    }

    /// Sign and append a block built from already-processed contents, sealing
    /// pending malicious records into it.
    fn commit_block(
        &mut self,
        transactions: Vec<Transaction>,
        mut writes: Vec<StateWrite>,
    ) -> Result<u64, HarnessError> {
        let height = self.chain.next_height();
        if let Some(root) = self.storage.seal_block(height) {
            writes.push(StateWrite {
                key: MALICIOUS_ROOT_KEY.into(),
                value: serde_json::Value::String(root.to_hex()),
            });
        }
        let block = self
            .chain
            .assemble_block(self.proposer(), transactions, writes, self.clock)?;
        self.chain.append_block(block)?;
        self.clock += 1;
        Ok(height)
    }

    /// Drain one batch, run the contracts over access requests, record
    /// denials, apply bans, and append the block.
    fn process_block(&mut self, mempool: &Mempool) -> Result<HashMap<Nonce, Processed>, HarnessError> {
        let height = self.chain.next_height();
        let now = self.clock;
        let params = self.config.contract_params();
        let mut rules = self.rules();
        let mut rules_changed = false;
        let mut out = Vec::new();
        let mut results = HashMap::new();
        for tx in mempool.drain(self.config.batch_size) {
            let Transaction::AccReq(req) = &tx else {
                out.push(tx);
                continue;
            };
            let exec = execute_request(&tx, self.chain.memory(), &self.model, &rules, now, &params);
            let nonce = req.nonce;
            let user_key = req.user_pk.key_hash();
            let verdict = match exec.result {
                Ok(list) => Ok(list),
                Err(denial) => {
                    self.storage.record_malicious(
                        tx.canonical_bytes(),
                        Some(user_key),
                        denial.output(),
                        now,
                    );
                    if crate::storage::counts_toward_ban(denial.reason)
                        && !rules.is_banned(&user_key)
                        && self.storage.check_ban_threshold(&user_key, now)
                    {
                        rules.register_ban(user_key);
                        rules_changed = true;
                    }
                    Err(denial.reason)
                }
            };
            out.push(tx);
            if let Some(v) = exec.verified {
                out.push(Transaction::Verified(v));
            }
            results.insert(nonce, Processed { height, verdict });
        }
        let writes = if rules_changed {
            vec![rules_state_write(&rules)]
        } else {
            Vec::new()
        };
        self.commit_block(out, writes)?;
        Ok(results)
    }

    /// Produce blocks until the mempool is empty; pending records alone
    /// also get a block so their root lands on chain.
    fn flush(&mut self, mempool: &Mempool) -> Result<HashMap<Nonce, Processed>, HarnessError> {
        let mut all = HashMap::new();
        while !mempool.is_empty() {
            all.extend(self.process_block(mempool)?);
        }
        if !self.storage.log().pending().is_empty() {
            self.commit_block(Vec::new(), Vec::new())?;
        }
        Ok(all)
    }

    fn record_rejection(&mut self, tx: &Transaction, reason: RejectReason) {
        self.storage.record_malicious(
            tx.canonical_bytes(),
            tx.user_key(),
            ContractOutput::new(rejection_reason(reason), crate::model::OperationMask::NONE),
            self.clock,
        );
    }

    /// Submit an already-built transaction as an attacker would, sealing
    /// any rejection into the log. Returns the admission verdict.
    pub fn submit_external(&mut self, tx: Transaction) -> Result<crate::ledger::Admission, HarnessError> {
        let mempool = Mempool::new(self.config.freshness_window);
        let verdict = mempool.submit(&self.chain, tx.clone(), self.clock);
        if let crate::ledger::Admission::Rejected(r) = verdict {
            self.record_rejection(&tx, r);
        }
        self.flush(&mempool)?;
        Ok(verdict)
    }

    pub fn run_request(
        &mut self,
        user: usize,
        resource: ResourceId,
        operation: Operation,
    ) -> Result<RequestOutcome, HarnessError> {
        let req = Request {
            user,
            resource,
            operation,
        };
        Ok(self.run_requests(&[req], 1)?.pop().expect("one outcome"))
    }

    /// Run the full pipeline for a batch of requests. With `threads > 1` the
    /// requests are partitioned by user and submitted and redeemed from
    /// concurrent requesters; each user's own requests keep their order.
    pub fn run_requests(
        &mut self,
        requests: &[Request],
        threads: usize,
    ) -> Result<Vec<RequestOutcome>, HarnessError> {
        let threads = threads.max(1);
        let now = self.clock;
        let txs: Vec<Transaction> = requests
            .iter()
            .map(|r| {
                let info = RequestInfo {
                    resource_id: r.resource,
                    operation: r.operation,
                };
                let nonce = gen_nonce(&mut self.rng);
                Transaction::acc_req(&self.users[r.user].keys, info, nonce, now)
            })
            .collect();

        let mempool = Mempool::new(self.config.freshness_window);
        let admissions = self.submit_all(&mempool, requests, &txs, threads);
        for (tx, adm) in txs.iter().zip(&admissions) {
            if let crate::ledger::Admission::Rejected(r) = adm {
                self.record_rejection(tx, *r);
            }
        }
        let processed = self.flush(&mempool)?;

        // Link issuance for granted requests, in request order.
        let mut links: Vec<Option<Transaction>> = vec![None; requests.len()];
        for (i, tx) in txs.iter().enumerate() {
            let nonce = tx.as_acc_req().expect("acc req").nonce;
            if let Some(Processed { verdict: Ok(list), .. }) = processed.get(&nonce) {
                let user_pk = self.users[requests[i].user].keys.public;
                let link = self
                    .storage
                    .issue_link(list, user_pk, self.clock)
                    .expect("authorize only grants stored resources");
                links[i] = Some(link);
            }
        }
        let link_pool = Mempool::new(self.config.freshness_window);
        for link in links.iter().flatten() {
            let admitted = link_pool.submit(&self.chain, link.clone(), self.clock);
            debug_assert!(admitted.is_accepted());
        }
        let link_height = if link_pool.is_empty() {
            None
        } else {
            let h = self.chain.next_height();
            self.flush(&link_pool)?;
            Some(h)
        };

        let redeemed = self.redeem_all(requests, &links, threads);
        let storage_pool = Mempool::new(self.config.freshness_window);
        for r in redeemed.iter().flatten().flatten() {
            let admitted = storage_pool.submit(&self.chain, r.1.clone(), self.clock);
            debug_assert!(admitted.is_accepted());
        }
        let storage_height = if storage_pool.is_empty() && self.storage.log().pending().is_empty() {
            None
        } else {
            let h = self.chain.next_height();
            self.flush(&storage_pool)?;
            Some(h)
        };

        let mut outcomes = Vec::with_capacity(requests.len());
        for (i, tx) in txs.into_iter().enumerate() {
            let nonce = tx.as_acc_req().expect("acc req").nonce;
            let mut heights = Vec::new();
            let verdict = match (&admissions[i], processed.get(&nonce)) {
                (crate::ledger::Admission::Rejected(r), _) => Verdict::Denied(rejection_reason(*r)),
                (_, Some(p)) => {
                    heights.push(p.height);
                    match &p.verdict {
                        Ok(_) => Verdict::Allowed,
                        Err(reason) => Verdict::Denied(*reason),
                    }
                }
                (_, None) => unreachable!("admitted requests are processed"),
            };
            let (verdict, content_hash, storage_tx) = match (verdict, &redeemed[i]) {
                (Verdict::Allowed, Some(Ok((content, st)))) => {
                    heights.extend(link_height);
                    heights.extend(storage_height);
                    (Verdict::Allowed, Some(hash(content)), Some(st.clone()))
                }
                (Verdict::Allowed, Some(Err(reason))) => {
                    heights.extend(link_height);
                    (Verdict::Denied(*reason), None, None)
                }
                (v, _) => (v, None, None),
            };
            outcomes.push(RequestOutcome {
                request: requests[i],
                verdict,
                content_hash,
                heights,
                acc_req: tx,
                link: links[i].take(),
                storage_tx,
            });
        }
        Ok(outcomes)
    }

    fn submit_all(
        &self,
        mempool: &Mempool,
        requests: &[Request],
        txs: &[Transaction],
        threads: usize,
    ) -> Vec<crate::ledger::Admission> {
        let now = self.clock;
        if threads == 1 {
            return txs
                .iter()
                .map(|tx| mempool.submit(&self.chain, tx.clone(), now))
                .collect();
        }
        let slots: Vec<Mutex<Option<crate::ledger::Admission>>> =
            txs.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for t in 0..threads {
                let (slots, chain) = (&slots, &self.chain);
                s.spawn(move || {
                    for (i, tx) in txs.iter().enumerate() {
                        if requests[i].user % threads == t {
                            let adm = mempool.submit(chain, tx.clone(), now);
                            *slots[i].lock().expect("slot") = Some(adm);
                        }
                    }
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot").expect("every request submitted"))
            .collect()
    }

    /// Each requester decrypts its link and redeems it.
    #[allow(clippy::type_complexity)]
    fn redeem_all(
        &mut self,
        requests: &[Request],
        links: &[Option<Transaction>],
        threads: usize,
    ) -> Vec<Option<Result<(Vec<u8>, Transaction), DenialReason>>> {
        let now = self.clock;
        let users = &self.users;
        let redeem_one = |storage: &Mutex<&mut Storage>, i: usize| {
            let Some(Transaction::Link(link)) = &links[i] else {
                return None;
            };
            let payload = open_link(&users[requests[i].user].keys.secret, link)
                .expect("link is encrypted to the requester");
            let mut guard = storage.lock().expect("storage lock");
            Some(
                guard
                    .redeem_link(&payload.token, &payload.nonce, now)
                    .map(|r| (r.content, r.transaction))
                    .map_err(|d| d.reason),
            )
        };
        let storage = Mutex::new(&mut self.storage);
        if threads == 1 {
            return (0..requests.len()).map(|i| redeem_one(&storage, i)).collect();
        }
        let slots: Vec<Mutex<Option<_>>> = requests.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for t in 0..threads {
                let (slots, storage, redeem_one) = (&slots, &storage, &redeem_one);
                s.spawn(move || {
                    for i in 0..requests.len() {
                        if requests[i].user % threads == t {
                            *slots[i].lock().expect("slot") = redeem_one(storage, i);
                        }
                    }
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().expect("slot")).collect()
    }

    /// Users with malicious records, with counts cross-checked against
    /// chain history.
    pub fn find_malicious_users(&self) -> Vec<MaliciousUser> {
        let mut counts: BTreeMap<Digest, usize> = BTreeMap::new();
        let log = self.storage.log();
        for r in log.records().iter().chain(log.pending()) {
            if let Some(s) = r.subject {
                *counts.entry(s).or_default() += 1;
            }
        }
        let rules = self.rules();
        counts
            .into_iter()
            .map(|(user_key, records)| MaliciousUser {
                user_key,
                records,
                onchain_denials: self.onchain_denials(&user_key),
                banned: rules.is_banned(&user_key),
            })
            .collect()
    }

    /// AccReqs on chain by `user_key` minus Storage txs for that user.
    pub fn onchain_denials(&self, user_key: &Digest) -> usize {
        let Some(pk) = self.users.iter().map(|u| u.keys.public).find(|pk| pk.key_hash() == *user_key)
        else {
            return 0;
        };
        let history = self.chain.query_history(&HistoryFilter::User(pk));
        let requests = history.iter().filter(|(_, t)| t.kind() == TxKind::AccReq).count();
        let redeemed = history.iter().filter(|(_, t)| t.kind() == TxKind::Storage).count();
        requests.saturating_sub(redeemed)
    }

    pub fn public_keys(&self) -> Vec<PublicKey> {
        self.users.iter().map(|u| u.keys.public).collect()
    }

    /// Malicious log export (sealed records only).
    pub fn export_log(&self) -> String {
        crate::storage::export_log(self.storage.log().records())
    }

    /// Root mirrored in contract state, zero when no record was ever sealed.
    pub fn mirrored_root(&self) -> Digest {
        World::root_from_chain(&self.chain)
    }

    pub(crate) fn root_from_chain(chain: &Chain) -> Digest {
        chain
            .memory_get(MALICIOUS_ROOT_KEY)
            .and_then(|v| v.as_str())
            .and_then(|s| Digest::from_hex(s).ok())
            .unwrap_or(Digest::ZERO)
    }

    pub fn chain_text(&self) -> String {
        self.chain
            .blocks()
            .iter()
            .map(|b| crate::canonical::to_canonical_string(b) + "\n")
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_text_round_trip() {
        for v in [Verdict::Allowed, Verdict::Denied(DenialReason::PolicyDenied)] {
            assert_eq!(v.to_string().parse::<Verdict>().unwrap(), v);
        }
        assert!("Denied(Maybe)".parse::<Verdict>().is_err());
    }

    #[test]
    fn bad_counts_rejected() {
        assert!(matches!(setup_world(2, 10, 5, 1), Err(HarnessError::Config(_))));
        assert!(matches!(setup_world(3, 0, 5, 1), Err(HarnessError::Config(_))));
    }
}
