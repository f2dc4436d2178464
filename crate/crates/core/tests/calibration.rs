//! Frequentist calibration of the decision rules under the null.

use nof1::power::{estimate_power, Design, PowerQuery, PowerTest};
use nof1::protocol::{TrialProtocol, WashoutPolicy};
use nof1::simulate::GenerativeParams;

fn null_query(test: PowerTest, reps: usize, seed: u64) -> PowerQuery {
    let p = TrialProtocol::two_arm("A", "B", 2, 2, 7, 7).with_washout(WashoutPolicy::none());
    let mut g = GenerativeParams::new(1.0, 0.0, 1.0);
    g.sd_delta = 0.3;
    let mut q = PowerQuery::new(p, vec![Design::new(12, 2, 7)], g, reps);
    q.test = test;
    q.seed = seed;
    q
}

#[test]
fn two_stage_population_test_holds_its_level() {
    let r = &estimate_power(&null_query(PowerTest::Population, 4000, 21)).unwrap().designs[0];
    assert!((r.power - 0.05).abs() < 3.0 * r.mc_se, "{} (mc se {})", r.power, r.mc_se);
}

#[test]
fn individual_test_counts_participant_trials() {
    // with no between-participant spread every individual test is a null test
    let mut q = null_query(PowerTest::Individual, 300, 22);
    q.params.sd_delta = 0.0;
    let r = &estimate_power(&q).unwrap().designs[0];
    assert_eq!(r.trials, 300 * 12);
    assert!((r.power - 0.05).abs() < 3.0 * r.mc_se, "{} (mc se {})", r.power, r.mc_se);
}
