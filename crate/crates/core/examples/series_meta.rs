//! Hierarchical analysis of a series of trials, with shrinkage of the
//! individual effects toward the population mean.

use nof1::meta::{fit_hier, shrinkage_report, HierSpec};
use nof1::protocol::{TrialProtocol, WashoutPolicy};
use nof1::sequences::BlockDraw;
use nof1::simulate::{simulate_series, GenerativeParams, MissingnessSpec, SequenceSource};

fn main() -> nof1::error::Result<()> {
    let protocol = TrialProtocol::two_arm("A", "B", 2, 2, 7, 7).with_washout(WashoutPolicy::none());
    let mut g = GenerativeParams::new(0.0, 0.5, 1.0);
    g.sd_delta = 0.3;
    g.sd_alpha = 0.5;
    let sim = simulate_series(
        &protocol,
        20,
        &g,
        &SequenceSource::Randomized(BlockDraw::Independent),
        &MissingnessSpec::None,
        3,
    )?;
    let spec = HierSpec::default();
    let h = fit_hier(&sim.series, &spec)?;
    for name in ["delta", "sd_delta", "sigma"] {
        let p = h.param(name).unwrap();
        println!("{name:>9}: {:.3} (sd {:.3})", p.mean, p.sd);
    }
    println!("converged: {} (max R-hat {:.3})", h.converged, h.max_rhat);
    println!("participant  own    pooled  weight");
    for r in shrinkage_report(&h, &sim.series, &spec.model)?.iter().take(5) {
        println!(
            "{:>11} {:>6.3} {:>7.3} {:>7.3}",
            r.participant_id,
            r.own_estimate.unwrap_or(f64::NAN),
            r.posterior_mean,
            r.conjugate_weight
        );
    }
    Ok(())
}
