//! Simulate a series of trials with AR(1) errors and MCAR gaps.

use nof1::data::write_csv;
use nof1::protocol::TrialProtocol;
use nof1::sequences::BlockDraw;
use nof1::simulate::{simulate_series, GenerativeParams, MissingnessSpec, SequenceSource};

fn main() -> nof1::error::Result<()> {
    let protocol = TrialProtocol::two_arm("A", "B", 2, 2, 7, 7);
    let mut g = GenerativeParams::new(5.0, 0.5, 1.0);
    g.rho = 0.4;
    g.sd_delta = 0.3;
    let sim = simulate_series(
        &protocol,
        3,
        &g,
        &SequenceSource::Randomized(BlockDraw::Independent),
        &MissingnessSpec::Mcar { probability: 0.1 },
        42,
    )?;
    for t in &sim.truths {
        println!("{} sequence {} true delta {:.3}", t.participant_id, t.sequence, t.delta);
    }
    let mut buf = Vec::new();
    write_csv(&mut buf, &sim.series[..1])?;
    let text = String::from_utf8(buf).unwrap();
    for line in text.lines().take(6) {
        println!("{line}");
    }
    Ok(())
}
