mod common;

use common::oracle::{Interp, Pc};
use cvn_core::analyze::{has_live_thread, DEFAULT_STATE_BUDGET};
use cvn_core::pipeline::analyse;

#[test]
fn oracle_agrees_on_deadlock_and_goals() {
    for name in common::ORACLE_FIXTURES {
        let art = common::load(name);
        let (oracle_deadlock, oracle_goals) = common::oracle::verdicts(&art);

        let a = analyse(&art, DEFAULT_STATE_BUDGET).unwrap();
        let net = &a.translation.net;
        let net_deadlock = a
            .space
            .states
            .iter()
            .any(|s| net.enabled_transitions(s).is_empty() && has_live_thread(net, s));
        let net_goals: Vec<bool> = a.analysis.goals.iter().map(|g| g.reachable).collect();

        assert_eq!(oracle_deadlock, net_deadlock, "{name}: deadlock existence");
        assert_eq!(oracle_goals, net_goals, "{name}: satisfiable goals");
        let has_blocking_finding = a.analysis.definite().next().is_some();
        assert_eq!(oracle_deadlock, has_blocking_finding, "{name}: definite finding iff stuck configuration");
    }
}

#[test]
fn oracle_sees_the_lost_wakeup() {
    let art = common::load("fig2");
    let oracle = Interp { art: &art };
    let stuck: Vec<_> = oracle.explore().into_iter().filter(|(_, s)| *s).map(|(c, _)| c).collect();
    assert!(!stuck.is_empty());
    for c in stuck {
        assert!(matches!(c.threads["worker"], Pc::Waiting(_)), "{c:?}");
        assert_eq!(c.threads["notifier"], Pc::Done);
    }
}
