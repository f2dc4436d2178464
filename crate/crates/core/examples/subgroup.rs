//! Individual effects that depend on a binary covariate.

use nof1::meta::{fit_hier, HierSpec, SubgroupSpec};
use nof1::protocol::{TrialProtocol, WashoutPolicy};
use nof1::sequences::BlockDraw;
use nof1::simulate::{simulate_series, GenerativeParams, MissingnessSpec, SequenceSource, SubgroupSim};

fn main() -> nof1::error::Result<()> {
    let protocol = TrialProtocol::two_arm("A", "B", 2, 2, 7, 7).with_washout(WashoutPolicy::none());
    let mut g = GenerativeParams::new(0.0, 1.0, 1.0);
    g.sd_delta = 0.2;
    g.subgroup = Some(SubgroupSim {
        covariate: "male".into(),
        probability: 0.5,
        delta2: 0.5,
    });
    let sim = simulate_series(
        &protocol,
        40,
        &g,
        &SequenceSource::Randomized(BlockDraw::Independent),
        &MissingnessSpec::None,
        11,
    )?;
    let spec = HierSpec {
        subgroup: Some(SubgroupSpec {
            covariate: "male".into(),
        }),
        ..Default::default()
    };
    let h = fit_hier(&sim.series, &spec)?;
    let d1 = h.param("delta1").unwrap();
    let d2 = h.param("delta2").unwrap();
    println!("delta1 {:.3} (sd {:.3}), delta2 {:.3} (sd {:.3})", d1.mean, d1.sd, d2.mean, d2.sd);
    println!("mean effect, male = 0: {:.3}", h.population_delta(Some(0.0)).unwrap());
    println!("mean effect, male = 1: {:.3}", h.population_delta(Some(1.0)).unwrap());
    Ok(())
}
