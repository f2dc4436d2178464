//! Analyze one participant's trial: GLS with AR(1) errors, then the
//! Bayesian posterior and the probability of a clinically relevant benefit.

use nof1::fit::{fit_bayes, fit_gls, Direction, ModelSpec};
use nof1::protocol::{TrialProtocol, WashoutPolicy};
use nof1::sequences::TreatmentSequence;
use nof1::simulate::{simulate_individual, GenerativeParams, MissingnessSpec};

fn main() -> nof1::error::Result<()> {
    let protocol = TrialProtocol::two_arm("A", "B", 3, 2, 7, 7).with_washout(WashoutPolicy::none());
    let mut g = GenerativeParams::new(5.0, 0.8, 1.0);
    g.rho = 0.5;
    let seq = TreatmentSequence::parse("ABBABA");
    let series = simulate_individual(&protocol, "P001", &seq, &g, &MissingnessSpec::None, 7)?;

    let spec = ModelSpec::ar1();
    let gls = fit_gls(&series, &spec)?;
    println!(
        "GLS: delta {:.3} (se {:.3}), rho {:.3}, p = {:.4}",
        gls.delta(),
        gls.delta_se(),
        gls.rho,
        gls.delta_p()
    );

    let mut post = fit_bayes(&series, &spec)?;
    post.set_benefit(0.5, Direction::Greater);
    let d = post.summary.param("delta").unwrap();
    println!(
        "posterior: delta {:.3} [{:.3}, {:.3}], R-hat {:.3}",
        d.mean, d.quantiles[0], d.quantiles[4], d.rhat
    );
    println!("P(delta > 0.5) = {:.3}", post.summary.benefit.probability);
    Ok(())
}
