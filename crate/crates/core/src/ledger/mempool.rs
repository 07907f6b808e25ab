use std::collections::{HashSet, VecDeque};
use std::sync::Mutex;

use crate::crypto::Nonce;

use super::{is_fresh, Chain, Timestamp, Transaction, DEFAULT_FRESHNESS_WINDOW};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    BadSignature,
    Stale,
    /// The access request nonce was already seen on chain or in the queue.
    ReplayedNonce,
    /// Verified is produced by the authentication contract, never submitted.
    Internal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Admission {
    Accepted,
    Rejected(RejectReason),
}

impl Admission {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Admission::Accepted)
    }
}

#[derive(Default)]
struct Inner {
    queue: VecDeque<Transaction>,
    pending_nonces: HashSet<Nonce>,
}

/// FIFO of admitted transactions. Safe to submit from many threads.
pub struct Mempool {
    inner: Mutex<Inner>,
    window: u64,
}

impl Default for Mempool {
    fn default() -> Self {
        Mempool::new(DEFAULT_FRESHNESS_WINDOW)
    }
}

impl Mempool {
    pub fn new(freshness_window: u64) -> Self {
        Mempool {
            inner: Mutex::new(Inner::default()),
            window: freshness_window,
        }
    }

    pub fn freshness_window(&self) -> u64 {
        self.window
    }

    /// Admission check against the chain's authority and spent nonces.
    pub fn check(&self, chain: &Chain, tx: &Transaction, now: Timestamp) -> Admission {
        if matches!(tx, Transaction::Verified(_)) {
            return Admission::Rejected(RejectReason::Internal);
        }
        if !tx.verify_signature(chain.authority()) {
            return Admission::Rejected(RejectReason::BadSignature);
        }
        if let Some(ts) = tx.timestamp() {
            if !is_fresh(ts, now, self.window) {
                return Admission::Rejected(RejectReason::Stale);
            }
        }
        Admission::Accepted
    }

    pub fn submit(&self, chain: &Chain, tx: Transaction, now: Timestamp) -> Admission {
        let verdict = self.check(chain, &tx, now);
        if !verdict.is_accepted() {
            return verdict;
        }
        let mut inner = self.inner.lock().expect("mempool lock");
        if let Transaction::AccReq(a) = &tx {
            if chain.acc_nonce_spent(&a.nonce) || !inner.pending_nonces.insert(a.nonce) {
                return Admission::Rejected(RejectReason::ReplayedNonce);
            }
        }
        inner.queue.push_back(tx);
        Admission::Accepted
    }

    /// Remove up to `max` transactions in arrival order.
    pub fn drain(&self, max: usize) -> Vec<Transaction> {
        let mut inner = self.inner.lock().expect("mempool lock");
        let n = max.min(inner.queue.len());
        let out: Vec<Transaction> = inner.queue.drain(..n).collect();
        for tx in &out {
            if let Transaction::AccReq(a) = tx {
                inner.pending_nonces.remove(&a.nonce);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("mempool lock").queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, KeyPair};
    use crate::ledger::RequestInfo;
    use crate::model::{EntityMetadata, Operation};

    fn chain() -> (Chain, KeyPair) {
        let admin = keygen(&[1; 32]);
        let vals = (0..3).map(|i| keygen(&[50 + i; 32]).public).collect();
        let c = Chain::genesis(vals, admin.public, keygen(&[2; 32]).public, 0).unwrap();
        (c, admin)
    }

    fn acc(user: &KeyPair, nonce: u8, ts: u64) -> Transaction {
        let req = RequestInfo {
            resource_id: 3,
            operation: Operation::Read,
        };
        Transaction::acc_req(user, req, Nonce([nonce; 16]), ts)
    }

    #[test]
    fn freshness_window_is_inclusive() {
        let (c, _) = chain();
        let user = keygen(&[9; 32]);
        let pool = Mempool::default();
        assert!(pool.submit(&c, acc(&user, 1, 1_000), 1_120).is_accepted());
        assert_eq!(
            pool.submit(&c, acc(&user, 2, 1_000), 1_121),
            Admission::Rejected(RejectReason::Stale)
        );
        assert_eq!(
            pool.submit(&c, acc(&user, 3, 1_000), 1_600),
            Admission::Rejected(RejectReason::Stale)
        );
    }

    #[test]
    fn non_admin_setup_is_rejected() {
        let (c, admin) = chain();
        let mallory = keygen(&[8; 32]);
        let meta = EntityMetadata::new([0; 8]).unwrap();
        let pool = Mempool::default();
        let forged = Transaction::setup(&mallory, mallory.public, meta, 10);
        assert_eq!(
            pool.submit(&c, forged, 10),
            Admission::Rejected(RejectReason::BadSignature)
        );
        let good = Transaction::setup(&admin, mallory.public, meta, 10);
        assert!(pool.submit(&c, good, 10).is_accepted());
    }

    #[test]
    fn duplicate_nonce_in_queue_is_rejected() {
        let (c, _) = chain();
        let user = keygen(&[9; 32]);
        let pool = Mempool::default();
        assert!(pool.submit(&c, acc(&user, 1, 5), 5).is_accepted());
        assert_eq!(
            pool.submit(&c, acc(&user, 1, 5), 5),
            Admission::Rejected(RejectReason::ReplayedNonce)
        );
    }

    #[test]
    fn drain_is_fifo_and_bounded() {
        let (c, _) = chain();
        let user = keygen(&[9; 32]);
        let pool = Mempool::default();
        for n in 0..5 {
            pool.submit(&c, acc(&user, n, 5), 5);
        }
        let first = pool.drain(3);
        assert_eq!(first, vec![acc(&user, 0, 5), acc(&user, 1, 5), acc(&user, 2, 5)]);
        assert_eq!(pool.drain(100).len(), 2);
        assert!(pool.is_empty());
    }

    #[test]
    fn concurrent_submitters() {
        let (c, _) = chain();
        let pool = Mempool::default();
        std::thread::scope(|s| {
            for t in 0..4u8 {
                let (c, pool) = (&c, &pool);
                s.spawn(move || {
                    let user = keygen(&[t; 32]);
                    for n in 0..25u8 {
                        let mut nonce = [n; 16];
                        nonce[0] = t;
                        let req = RequestInfo {
                            resource_id: 1,
                            operation: Operation::Read,
                        };
                        let tx = Transaction::acc_req(&user, req, Nonce(nonce), 5);
                        assert!(pool.submit(c, tx, 5).is_accepted());
                    }
                });
            }
        });
        assert_eq!(pool.len(), 100);
    }
}
