mod common;

use std::sync::Arc;

use common::{arb_graph, random_config};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssbfs::adversary::{Adversary, AdversaryKind};
use ssbfs::format::{read_trace, trace_to_string};
use ssbfs::protocol::enabled_set;
use ssbfs::scheduler::{default_budget, Termination};
use ssbfs::{run, DaemonKind, DaemonPolicy, Error, Fairness, FaultModel, StopCriterion, Topology};

fn adversary(choice: u8, seed: u64) -> AdversaryKind {
    match choice % 6 {
        0 => AdversaryKind::Silent,
        1 => AdversaryKind::FakeRoot,
        2 => AdversaryKind::MirrorRoot,
        3 => AdversaryKind::Oscillator { period: 1 + seed as usize % 3 },
        4 => AdversaryKind::Random { seed },
        _ => AdversaryKind::Honest,
    }
}

fn daemon(choice: u8, seed: u64) -> DaemonPolicy {
    let kind = [DaemonKind::Central, DaemonKind::Distributed, DaemonKind::Synchronous][choice as usize % 3];
    let fairness = if choice / 3 % 2 == 0 {
        Fairness::RoundRobin
    } else {
        Fairness::Random { seed }
    };
    DaemonPolicy { kind, fairness }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn traces_round_trip_and_replay(
        (n, root, edges) in arb_graph(2, 9),
        mask in any::<u32>(),
        adv in any::<u8>(),
        dmn in any::<u8>(),
        seed in any::<u64>(),
    ) {
        let topo = Arc::new(Topology::new(n, root, edges).unwrap());
        let byz: Vec<usize> = (0..n).filter(|&v| v != root && mask >> v & 1 == 1).take(3).collect();
        let fm = FaultModel::new(&topo, byz).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = random_config(&mut rng, &topo, 2 * n as u64);
        init.normalize(&topo, &fm);
        let policy = daemon(dmn, seed);
        let exec = run(
            topo.clone(),
            fm.clone(),
            init,
            policy.clone(),
            &mut Adversary::new(adversary(adv, seed)),
            StopCriterion::MaxSteps(300),
            seed,
        )
        .unwrap();

        prop_assert!(exec.is_replayable());
        let text = trace_to_string(&exec);
        let back = read_trace(&text, topo.clone()).unwrap();
        prop_assert_eq!(back.steps(), exec.steps());
        prop_assert_eq!(trace_to_string(&back), text);

        for (i, record) in exec.steps().iter().enumerate() {
            let enabled = enabled_set(&topo, &fm, exec.configuration(i));
            prop_assert!(record.activated.iter().all(|v| enabled.contains(v)));
            prop_assert!(record.byz_writes.keys().all(|&b| fm.is_byzantine(b)));
            match policy.kind {
                DaemonKind::Central => {
                    let actions = record.activated.len() + record.byz_writes.len();
                    prop_assert!(actions <= 1);
                    prop_assert!(enabled.is_empty() || actions == 1);
                }
                DaemonKind::Synchronous => prop_assert_eq!(&record.activated, &enabled),
                DaemonKind::Distributed => {
                    prop_assert!(enabled.is_empty() || !record.activated.is_empty())
                }
            }
        }
    }

    #[test]
    fn fault_free_runs_go_quiet((n, root, edges) in arb_graph(1, 9), dmn in any::<u8>(), seed in any::<u64>()) {
        let topo = Arc::new(Topology::new(n, root, edges).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exec = run(
            topo.clone(),
            FaultModel::fault_free(),
            random_config(&mut rng, &topo, 2 * n as u64),
            daemon(dmn, seed),
            &mut Adversary::new(AdversaryKind::Silent),
            StopCriterion::Quiescent { budget: default_budget(&topo) },
            seed,
        )
        .unwrap();
        prop_assert_eq!(exec.termination, Termination::Quiescent);
        prop_assert!(common::is_spanning_tree(&topo, exec.last_configuration()));
    }
}

#[test]
fn tampered_trace_text_is_caught() {
    let topo = Arc::new(Topology::new(4, 0, [(0, 1), (1, 2), (2, 3)]).unwrap());
    let exec = run(
        topo.clone(),
        FaultModel::fault_free(),
        ssbfs::Configuration::uniform(4, ssbfs::ProcessState::new(None, 7)),
        DaemonPolicy::central_round_robin(),
        &mut Adversary::new(AdversaryKind::Silent),
        StopCriterion::Quiescent { budget: 100 },
        0,
    )
    .unwrap();
    let text = trace_to_string(&exec);
    let line = text.lines().find(|l| l.starts_with("step 2 ")).unwrap().to_string();
    let (head, chg) = line.rsplit_once("chg=").unwrap();
    let bumped = chg.replace(":1", ":5").replace(":2", ":6");
    assert_ne!(bumped, chg);
    let tampered = text.replace(&line, &format!("{head}chg={bumped}"));
    let back = read_trace(&tampered, topo).unwrap();
    assert_eq!(back.replay().unwrap_err().index, 2);
}

#[test]
fn scripted_daemon_rejects_disabled_activation() {
    let topo = Arc::new(Topology::new(3, 0, [(0, 1), (1, 2)]).unwrap());
    let err = run(
        topo,
        FaultModel::fault_free(),
        ssbfs::Configuration::uniform(3, ssbfs::ProcessState::ROOT),
        DaemonPolicy {
            kind: DaemonKind::Distributed,
            fairness: Fairness::Script(vec![vec![0]]),
        },
        &mut Adversary::new(AdversaryKind::Silent),
        StopCriterion::MaxSteps(5),
        0,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Contract(_)), "{err}");
}
