//! Power of equal-budget designs: many short trials against few long ones.

use nof1::power::{allocation_frontier, Design, PowerQuery};
use nof1::protocol::{TrialProtocol, WashoutPolicy};
use nof1::simulate::GenerativeParams;

fn main() -> nof1::error::Result<()> {
    let protocol = TrialProtocol::two_arm("A", "B", 2, 2, 7, 7).with_washout(WashoutPolicy::none());
    let designs = vec![Design::new(100, 1, 14), Design::new(50, 2, 14), Design::new(25, 4, 14)];
    // heterogeneous effects, then a common effect
    for (sd_delta, delta) in [(0.6, 0.2), (0.0, 0.08)] {
        let mut g = GenerativeParams::new(0.0, delta, 1.0);
        g.sd_delta = sd_delta;
        let mut q = PowerQuery::new(protocol.clone(), designs.clone(), g, 400);
        q.budget = Some(2800);
        println!("between-participant sd {sd_delta}, mean effect {delta}:");
        for e in allocation_frontier(&q)? {
            let r = &e.result;
            let (lo, hi) = r.interval95();
            println!(
                "  rank {} {:<14} power {:.3} [{:.3}, {:.3}]{}",
                e.rank,
                r.label,
                r.power,
                lo,
                hi,
                if e.tied_with_previous { " (tie)" } else { "" }
            );
        }
    }
    Ok(())
}
