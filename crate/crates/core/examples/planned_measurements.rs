//! Range of planned outcome measurements over a family of trial layouts.

use nof1::protocol::planned_measurement_bounds;

fn main() -> nof1::error::Result<()> {
    // 2 to 4 periods per treatment, 1 or 2 week periods, daily measurement,
    // two treatments, at most 12 weeks in total
    let (lo, hi) = planned_measurement_bounds((2, 4), (1, 2), 1, 2, Some(12))?;
    println!("between {lo} and {hi} measurements");
    let (lo, hi) = planned_measurement_bounds((2, 4), (1, 2), 1, 2, None)?;
    println!("without the length cap: between {lo} and {hi}");
    Ok(())
}
