use std::path::PathBuf;

use outage_sim::scenario::nadir;
use outage_sim::Config;

fn shipped(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn shipped_baseline_equals_builtin() {
    assert_eq!(
        Config::from_toml_str(&shipped("baseline.toml")).unwrap(),
        Config::baseline()
    );
}

#[test]
fn shipped_no_outage_equals_builtin() {
    assert_eq!(
        Config::from_toml_str(&shipped("no_outage.toml")).unwrap(),
        Config::no_outage()
    );
}

#[test]
fn baseline_timeline_shape() {
    let tl = Config::baseline().validate().unwrap().timeline;
    let ps: Vec<f64> = tl.all_probs().iter().map(|p| p.success).collect();
    assert_eq!(ps.len(), 300);
    // argmin by direct scan, earliest tie
    let mut best = 0;
    for (i, &p) in ps.iter().enumerate() {
        if p < ps[best] {
            best = i;
        }
    }
    assert_eq!(tl.nadir(), best);
    assert_eq!(nadir(tl.all_probs()), best);
    let phases = tl.phases().unwrap();
    assert!(phases.outage.0 <= best && best < phases.outage.1);
    assert!(phases.stable_end < best && best < phases.recovery_end && phases.recovery_end <= 300);
    assert!(ps[..50].iter().all(|&p| p == 0.99));
    assert!(ps[60..80].iter().all(|&p| p == 0.4));
    assert!(ps[best..].windows(2).all(|w| w[1] >= w[0]));
    for p in tl.all_probs() {
        assert!((p.success + p.failure + p.unknown - 1.0).abs() < 1e-9);
    }
    let demand = tl.all_demand();
    assert!(demand.iter().all(|&d| d >= 1.0));
    assert!(demand.contains(&1.5));
}

#[test]
fn theta_overlap_rejected_with_key() {
    let mut src = shipped("baseline.toml");
    src = src.replace("theta_gap = [0.15, 0.25]", "theta_gap = [0.15, 0.9]");
    let e = Config::from_toml_str(&src).unwrap_err();
    assert!(e.key.contains("theta"), "{e}");
    assert!(e.line.is_some(), "{e}");
}
