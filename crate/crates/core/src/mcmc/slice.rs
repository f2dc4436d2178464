use rand::Rng;

/// One univariate slice-sampling update (stepping out, then shrinkage).
pub(crate) fn slice_sample<R: Rng + ?Sized, F: FnMut(f64) -> f64>(
    rng: &mut R,
    x0: f64,
    mut log_density: F,
    width: f64,
) -> f64 {
    let f0 = log_density(x0);
    let log_y = f0 + rng.random::<f64>().max(f64::MIN_POSITIVE).ln();
    let mut lo = x0 - width * rng.random::<f64>();
    let mut hi = lo + width;
    let mut steps = 64;
    while steps > 0 && log_density(lo) > log_y {
        lo -= width;
        steps -= 1;
    }
    steps = 64;
    while steps > 0 && log_density(hi) > log_y {
        hi += width;
        steps -= 1;
    }
    for _ in 0..200 {
        let x1 = lo + (hi - lo) * rng.random::<f64>();
        if log_density(x1) > log_y {
            return x1;
        }
        if x1 < x0 {
            lo = x1;
        } else {
            hi = x1;
        }
    }
    x0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn samples_standard_normal() {
        let mut r = stream(1, &[]);
        let mut x = 3.0;
        let mut draws = Vec::new();
        for _ in 0..20000 {
            x = slice_sample(&mut r, x, |v| -0.5 * v * v, 2.0);
            draws.push(x);
        }
        let m = crate::stats::mean(&draws);
        let v = crate::stats::variance(&draws);
        assert!(m.abs() < 0.05, "{m}");
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }
}
