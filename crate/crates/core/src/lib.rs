pub mod bench;
pub mod canonical;
pub mod config;
pub mod contracts;
pub mod crypto;
pub mod harness;
pub mod ledger;
pub mod merkle;
pub mod model;
pub mod storage;
