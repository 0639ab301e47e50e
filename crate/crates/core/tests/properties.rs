//! Cross-module properties over randomly generated party scripts.

use std::collections::BTreeMap;

use dcaudit_core::collectors::CollectorSpec;
use dcaudit_core::execution::{restrict_view, Action, ExecutionConfig, Initiator, Party, PartyScript, Protocol};
use dcaudit_core::hi::{check_history_independence, CompactListImpl, DEFAULT_BUDGET};
use dcaudit_core::simulators::{BoardSimulator, ReplaySimulator, Simulator};
use dcaudit_core::{run_execution, run_ideal_execution};
use proptest::prelude::*;

/// Builds a board script from op codes: 0 posts a fresh key, 1 fetches,
/// 2 deletes the oldest post not yet deleted.
fn board_script(prefix: &str, ops: &[u8], via: &[u8]) -> PartyScript {
    let mut actions = Vec::new();
    let mut posted = 0usize;
    let mut deleted = 0usize;
    for &op in ops {
        match op % 3 {
            0 => {
                posted += 1;
                actions.push(Action::Post {
                    key: format!("{prefix}{posted}"),
                    msg: format!("msg-{prefix}{posted}"),
                    via: via.to_vec(),
                });
                actions.push(Action::Capture { name: format!("c{posted}") });
            }
            1 => actions.push(Action::Fetch { via: via.to_vec() }),
            _ => {
                if deleted < posted {
                    deleted += 1;
                    actions.push(Action::Delete { token: format!("c{deleted}") });
                }
            }
        }
    }
    PartyScript::new(actions)
}

fn ops() -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(0u8..3, 0..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn board_state_is_simulatable(y in ops(), z in ops(), seed in any::<u64>(), bias in 0.0f64..=1.0) {
        let cfg = ExecutionConfig::new(16, seed).with_y_bias(bias);
        let result = run_execution(&CollectorSpec::Board, &board_script("y", &y, &[]), &board_script("z", &z, &[]), &cfg).unwrap();
        let bespoke = BoardSimulator.simulate(&result.view_z_x, 16, 0).unwrap();
        prop_assert_eq!(&bespoke, &result.state_x);
        let replayed = ReplaySimulator::new(CollectorSpec::Board).simulate(&result.view_z_x, 16, seed).unwrap();
        prop_assert_eq!(replayed, bespoke);
    }

    #[test]
    fn terminate_phase_matches_every_requester_token(y in ops(), z in ops(), seed in any::<u64>()) {
        let cfg = ExecutionConfig::new(16, seed);
        let result = run_execution(&CollectorSpec::Board, &board_script("y", &y, &[]), &board_script("z", &z, &[]), &cfg).unwrap();
        let mut balance: BTreeMap<Vec<u8>, i64> = BTreeMap::new();
        for r in result.transcript.iter().filter(|r| r.initiator == Initiator::Requester) {
            match (&r.protocol, &r.deletion_token) {
                (Protocol::Pi(_), Some(t)) => *balance.entry(t.clone()).or_default() += 1,
                (Protocol::PiD, Some(t)) => *balance.entry(t.clone()).or_default() -= 1,
                _ => {}
            }
        }
        prop_assert!(balance.values().all(|&v| v == 0), "{:?}", balance);
    }

    #[test]
    fn executions_are_reproducible(y in ops(), z in ops(), seed in any::<u64>(), trial in 0u64..50) {
        let cfg = ExecutionConfig::new(16, seed).with_trial(trial);
        let (ys, zs) = (board_script("y", &y, &[]), board_script("z", &z, &[]));
        let a = run_execution(&CollectorSpec::Board, &ys, &zs, &cfg).unwrap();
        let b = run_execution(&CollectorSpec::Board, &ys, &zs, &cfg).unwrap();
        prop_assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn restriction_commutes_with_truncation(y in ops(), z in ops(), seed in any::<u64>()) {
        let cfg = ExecutionConfig::new(16, seed);
        let result = run_execution(&CollectorSpec::Board, &board_script("y", &y, &[]), &board_script("z", &z, &[]), &cfg).unwrap();
        let full = restrict_view(&result.transcript, Party::Environment, Party::Collector).unwrap();
        for t in 0..=result.transcript.len() {
            let truncated_first = restrict_view(&result.transcript[..t], Party::Environment, Party::Collector).unwrap();
            let restricted_first: Vec<_> = full.records.iter().filter(|r| (r.order_index as usize) < t).cloned().collect();
            prop_assert_eq!(&truncated_first.records, &restricted_first);
        }
        prop_assert!(full.records.windows(2).all(|w| w[0].order_index < w[1].order_index));
    }

    #[test]
    fn silent_requester_gives_identical_worlds(z in ops(), seed in any::<u64>()) {
        let cfg = ExecutionConfig::new(16, seed);
        let zs = board_script("z", &z, &[]);
        let real = run_execution(&CollectorSpec::Board, &PartyScript::silent(), &zs, &cfg).unwrap();
        let ideal = run_ideal_execution(&CollectorSpec::Board, &zs, &cfg).unwrap();
        prop_assert_eq!(real.view_z_x, ideal.view_z_x);
        prop_assert_eq!(real.state_x, ideal.state_x);
    }

    #[test]
    fn parallel_halves_do_not_interfere(a in ops(), b in ops(), seed in any::<u64>()) {
        let composed = CollectorSpec::parse("parallel(board,board)").unwrap();
        let cfg = ExecutionConfig::new(16, seed);
        let z = PartyScript::new(
            board_script("a", &a, &[1]).actions.into_iter()
                .map(|act| match act {
                    Action::Capture { name } => Action::Capture { name: format!("a-{name}") },
                    Action::Delete { token } => Action::Delete { token: format!("a-{token}") },
                    other => other,
                })
                .chain(board_script("b", &b, &[2]).actions)
                .collect(),
        );
        let result = run_execution(&composed, &PartyScript::silent(), &z, &cfg).unwrap();
        let (s1, s2) = result.state_x.split_pair().unwrap();
        let only_a = run_execution(&CollectorSpec::Board, &PartyScript::silent(), &board_script("a", &a, &[]), &cfg).unwrap();
        let only_b = run_execution(&CollectorSpec::Board, &PartyScript::silent(), &board_script("b", &b, &[]), &cfg).unwrap();
        prop_assert_eq!(s1, only_a.state_x);
        prop_assert_eq!(s2, only_b.state_x);
    }
}

#[test]
fn history_independent_list_gives_exact_replay() {
    let universe: Vec<Vec<u8>> = ["k1", "k2", "k3"].iter().map(|k| k.as_bytes().to_vec()).collect();
    assert!(check_history_independence(&CompactListImpl, &universe, 5, DEFAULT_BUDGET).unwrap().is_ok());
    let y = board_script("y", &[0, 0, 1, 2, 0], &[]);
    let z = board_script("z", &[0, 1, 0, 2, 1, 0], &[]);
    for trial in 0..200 {
        let cfg = ExecutionConfig::new(16, 99).with_trial(trial);
        let result = run_execution(&CollectorSpec::Board, &y, &z, &cfg).unwrap();
        let replayed = ReplaySimulator::new(CollectorSpec::Board).simulate(&result.view_z_x, 16, trial).unwrap();
        assert_eq!(replayed, result.state_x, "trial {trial}");
    }
}

#[test]
fn sequential_internal_view_lists_forwarded_sessions() {
    let composed = CollectorSpec::parse("sequential(frontend,board)").unwrap();
    let z = PartyScript::new(vec![
        Action::Post { key: "k".into(), msg: "m".into(), via: vec![] },
        Action::Capture { name: "t".into() },
        Action::Fetch { via: vec![] },
        Action::Delete { token: "t".into() },
    ]);
    let result = run_execution(&composed, &PartyScript::silent(), &z, &ExecutionConfig::new(16, 0)).unwrap();
    let internal = restrict_view(&result.transcript, Party::Sub(1), Party::Sub(2)).unwrap();
    assert_eq!(internal.len(), 3);
    assert!(internal.records.iter().all(|r| r.initiator == Initiator::Internal));
    assert_eq!(
        internal.records.iter().map(|r| r.parent_sid.unwrap()).collect::<Vec<_>>(),
        vec![0, 2, 4]
    );
    assert_eq!(result.view_z_x.len(), 3);
}
