//! Enumerate, classify and randomize treatment sequences.

use nof1::protocol::{LeadingRun, SequenceConstraints, TrialProtocol};
use nof1::sequences::{
    classify_sequence, draw_block_randomized, enumerate_sequences, BlockDraw, EnumerateOptions,
};

fn main() -> nof1::error::Result<()> {
    let ab = vec!["A".to_string(), "B".to_string()];
    let opts = EnumerateOptions::default();

    let all = enumerate_sequences(4, &ab, &SequenceConstraints::default(), &opts)?;
    let balanced = SequenceConstraints {
        require_balance: true,
        ..Default::default()
    };
    let four = enumerate_sequences(4, &ab, &balanced, &opts)?;
    println!("4 periods: {} sequences, {} balanced", all.len(), four.len());
    for s in &four {
        let c = classify_sequence(s);
        println!("  {s}  crossovers={} {}", c.n_crossovers, c.label.as_str());
    }

    let six = enumerate_sequences(6, &ab, &balanced, &opts)?;
    let three_crossovers = SequenceConstraints {
        require_balance: true,
        min_crossovers: 3,
        forbid_leading_run: Some(LeadingRun {
            treatment: "A".into(),
            run_length: 2,
        }),
        block_randomized: false,
    };
    let kept = enumerate_sequences(6, &ab, &three_crossovers, &opts)?;
    println!("6 periods: {} balanced, {} with >= 3 crossovers and no leading AA", six.len(), kept.len());

    let protocol = TrialProtocol::two_arm("A", "B", 3, 2, 7, 7);
    for seed in 0..3 {
        println!("block-randomized (seed {seed}): {}", draw_block_randomized(&protocol, seed, BlockDraw::Independent)?);
    }
    Ok(())
}
