//! Direction-specific carryover pooled across a series of trials.

use nof1::meta::{carryover_pooled, HierSpec};
use nof1::protocol::{TrialProtocol, WashoutPolicy};
use nof1::sequences::BlockDraw;
use nof1::simulate::{
    simulate_series, CarryoverSpec, GenerativeParams, MissingnessSpec, SequenceSource, TransitionEffect,
};

fn main() -> nof1::error::Result<()> {
    let protocol = TrialProtocol::two_arm("A", "B", 3, 2, 7, 7).with_washout(WashoutPolicy::none());
    let mut g = GenerativeParams::new(0.0, 1.0, 0.5);
    g.carryover = Some(CarryoverSpec {
        lag_measurements: 2,
        effects: vec![
            TransitionEffect {
                from: "A".into(),
                to: "B".into(),
                effect: -0.6,
            },
            TransitionEffect {
                from: "B".into(),
                to: "A".into(),
                effect: 0.3,
            },
        ],
    });
    let sim = simulate_series(
        &protocol,
        15,
        &g,
        &SequenceSource::Randomized(BlockDraw::Independent),
        &MissingnessSpec::None,
        5,
    )?;
    let c = carryover_pooled(&sim.series, 2, &HierSpec::default())?;
    for t in &c.transitions {
        println!(
            "{} -> {}: average {:.3} (sd {:.3}) over {} crossovers",
            t.from, t.to, t.average.mean, t.average.sd, t.n_crossovers
        );
    }
    for w in &c.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
