use rand::Rng;
use serde::Serialize;

use crate::ledger::{parse_blocks, validate_blocks, Admission, Block};
use crate::storage::{
    chain_roots, export_log, open_link, parse_log, verify_log_against_chain, LogVerdict,
};

use super::{find_pair, HarnessError, Verdict, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LogMutation {
    FlipByte,
    Delete,
    Insert,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mutation {
    FlipChainByte,
    ReuseLink,
    ReplayAccReq,
    WrongValidatorBlock,
    MutateMaliciousRecord(LogMutation),
}

impl std::str::FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "flip-chain-byte" => Mutation::FlipChainByte,
            "reuse-link" => Mutation::ReuseLink,
            "replay-accreq" => Mutation::ReplayAccReq,
            "wrong-validator" => Mutation::WrongValidatorBlock,
            "flip-log-byte" => Mutation::MutateMaliciousRecord(LogMutation::FlipByte),
            "delete-log-record" => Mutation::MutateMaliciousRecord(LogMutation::Delete),
            "insert-log-record" => Mutation::MutateMaliciousRecord(LogMutation::Insert),
            other => return Err(format!("unknown mutation `{other}`")),
        })
    }
}

impl Mutation {
    pub const NAMES: [&'static str; 7] = [
        "flip-chain-byte",
        "reuse-link",
        "replay-accreq",
        "wrong-validator",
        "flip-log-byte",
        "delete-log-record",
        "insert-log-record",
    ];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttackOutcome {
    pub mutation: Mutation,
    pub caught: bool,
    pub detail: String,
}

fn flip_random_byte<R: Rng>(bytes: &mut [u8], rng: &mut R) -> usize {
    let at = rng.gen_range(0..bytes.len());
    bytes[at] ^= rng.gen_range(1..=255u8);
    at
}

/// Whether a mutated JSON-lines chain still validates.
fn chain_text_accepted(bytes: &[u8]) -> Result<(), String> {
    let text = std::str::from_utf8(bytes).map_err(|_| "not UTF-8".to_string())?;
    let blocks = parse_blocks(text).map_err(|e| e.to_string())?;
    validate_blocks(&blocks).map(|_| ()).map_err(|e| e.to_string())
}

/// Whether a mutated log export still verifies against the chain roots.
pub(crate) fn log_text_verdict(text: &[u8], world: &World) -> LogVerdict {
    let Ok(text) = std::str::from_utf8(text) else {
        return LogVerdict::Compromised {
            first_divergent_height: None,
        };
    };
    match parse_log(text) {
        Ok(records) => verify_log_against_chain(&records, &chain_roots(world.chain.blocks())),
        Err(_) => LogVerdict::Compromised {
            first_divergent_height: None,
        },
    }
}

/// Run a request that the model grants and return its outcome.
fn granted_request(world: &mut World) -> Result<super::RequestOutcome, HarnessError> {
    let (u, r, op) = find_pair(world, true, &[]).ok_or(HarnessError::NoPair(4))?;
    world.run_request(u, r, op)
}

/// Apply one attack to `world` and report whether a defense caught it.
pub fn tamper<R: Rng>(world: &mut World, mutation: Mutation, rng: &mut R) -> Result<AttackOutcome, HarnessError> {
    let (caught, detail) = match mutation {
        Mutation::FlipChainByte => {
            let mut bytes = world.chain_text().into_bytes();
            let at = flip_random_byte(&mut bytes, rng);
            match chain_text_accepted(&bytes) {
                Ok(()) => (false, format!("byte {at} flipped and the chain still validates")),
                Err(e) => (true, format!("byte {at}: {e}")),
            }
        }
        Mutation::ReuseLink => {
            let outcome = granted_request(world)?;
            let Some(crate::ledger::Transaction::Link(link)) = &outcome.link else {
                return Ok(AttackOutcome {
                    mutation,
                    caught: false,
                    detail: format!("no link issued, request {}", outcome.verdict),
                });
            };
            let user = &world.users[outcome.request.user];
            let payload = open_link(&user.keys.secret, link).expect("own link");
            world.advance_clock(rng.gen_range(0..world.config.freshness_window));
            let now = world.clock;
            let result = world.storage.redeem_link(&payload.token, &payload.nonce, now);
            world.flush(&crate::ledger::Mempool::new(world.config.freshness_window))?;
            match result {
                Ok(_) => (false, "captured link redeemed twice".into()),
                Err(d) => (
                    d.reason == crate::contracts::DenialReason::Replay,
                    format!("second redemption denied: {}", d.reason),
                ),
            }
        }
        Mutation::ReplayAccReq => {
            let outcome = granted_request(world)?;
            let window = world.config.freshness_window;
            world.advance_clock(window + rng.gen_range(1..=600));
            match world.submit_external(outcome.acc_req)? {
                Admission::Accepted => (false, "replayed request admitted".into()),
                Admission::Rejected(r) => (true, format!("replay rejected at submission: {r:?}")),
            }
        }
        Mutation::WrongValidatorBlock => {
            let height = world.chain.next_height();
            let v = world.validators.len();
            let scheduled = world.chain.authority().scheduled(height);
            let wrong = (scheduled + rng.gen_range(1..v)) % v;
            let block = Block::signed(
                height,
                world.chain.tip().hash(),
                world.clock,
                &world.validators[wrong],
                Vec::new(),
                Vec::new(),
            );
            let before = world.chain.height();
            let rejected = world.chain.append_block(block).is_err();
            (
                rejected && world.chain.height() == before,
                format!("validator {wrong} proposed height {height}, scheduled {scheduled}"),
            )
        }
        Mutation::MutateMaliciousRecord(kind) => {
            if world.storage.log().records().is_empty() {
                let (u, r, op) = find_pair(world, false, &[]).ok_or(HarnessError::NoPair(2))?;
                world.run_request(u, r, op)?;
            }
            let records = world.storage.log().records().to_vec();
            let mutated: Vec<u8> = match kind {
                LogMutation::FlipByte => {
                    let mut bytes = export_log(&records).into_bytes();
                    flip_random_byte(&mut bytes, rng);
                    bytes
                }
                LogMutation::Delete => {
                    let mut rs = records.clone();
                    rs.remove(rng.gen_range(0..rs.len()));
                    export_log(&rs).into_bytes()
                }
                LogMutation::Insert => {
                    let mut rs = records.clone();
                    let mut forged = rs[rng.gen_range(0..rs.len())].clone();
                    forged.sequence = rs.iter().map(|r| r.sequence).max().unwrap_or(0) + 1;
                    forged.time += rng.gen_range(0..60);
                    let at = rng.gen_range(0..=rs.len());
                    rs.insert(at, forged);
                    export_log(&rs).into_bytes()
                }
            };
            match log_text_verdict(&mutated, world) {
                LogVerdict::Verified => (false, "mutated log still verifies".into()),
                LogVerdict::Compromised {
                    first_divergent_height,
                } => (
                    true,
                    match first_divergent_height {
                        Some(h) => format!("compromised at height {h}"),
                        None => "compromised: export unreadable".into(),
                    },
                ),
            }
        }
    };
    Ok(AttackOutcome {
        mutation,
        caught,
        detail,
    })
}

impl World {
    /// Verdict for the world's own log export against its chain.
    pub fn verify_own_log(&self) -> LogVerdict {
        log_text_verdict(self.export_log().as_bytes(), self)
    }

    /// Outcome of a granted request, for callers that need a captured link.
    pub fn granted_request(&mut self) -> Result<super::RequestOutcome, HarnessError> {
        let o = granted_request(self)?;
        debug_assert_eq!(o.verdict, Verdict::Allowed);
        Ok(o)
    }
}
