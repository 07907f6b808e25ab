use dlacb_core::harness::{run_all_scenarios, setup_world};
use dlacb_core::ledger::{Chain, HistoryFilter, LedgerError, TxKind};
use dlacb_core::model::Operation;

#[test]
fn replaying_blocks_rebuilds_memory() {
    let mut w = setup_world(3, 20, 10, 5).unwrap();
    run_all_scenarios(&mut w).unwrap();
    for i in 0..3 {
        w.run_request(2, 500 + i, Operation::Write).unwrap();
    }
    let blocks = w.chain().blocks();
    let mut replay = Chain::from_genesis(blocks[0].clone()).unwrap();
    for b in &blocks[1..] {
        replay.append_block(b.clone()).unwrap();
    }
    assert_eq!(replay.memory(), w.chain().memory());
    assert_eq!(replay.tip().hash(), w.chain().tip().hash());
    assert!(w.rules().is_banned(&w.user(2).keys.public.key_hash()));
}

#[test]
fn blocks_out_of_order_are_rejected() {
    let mut w = setup_world(3, 10, 5, 6).unwrap();
    run_all_scenarios(&mut w).unwrap();
    let blocks = w.chain().blocks();
    let mut replay = Chain::from_genesis(blocks[0].clone()).unwrap();
    let err = replay.append_block(blocks[2].clone()).unwrap_err();
    assert!(matches!(err, LedgerError::InvalidBlock { height: 2, .. }), "{err}");
    assert_eq!(replay.height(), 0);
}

#[test]
fn history_filters_agree_with_a_linear_scan() {
    let mut w = setup_world(3, 15, 8, 8).unwrap();
    run_all_scenarios(&mut w).unwrap();
    let all: Vec<_> = w.chain().blocks().iter().flat_map(|b| b.transactions.iter()).collect();
    for kind in [TxKind::Setup, TxKind::AccReq, TxKind::Verified, TxKind::Link, TxKind::Storage] {
        let n = all.iter().filter(|t| t.kind() == kind).count();
        assert_eq!(w.chain().query_history(&HistoryFilter::Kind(kind)).len(), n, "{kind:?}");
    }
    let setups = w.chain().query_history(&HistoryFilter::Kind(TxKind::Setup)).len();
    assert_eq!(setups, w.registered_count());
}
