use alloc::vec::Vec;

/// Direction of a monotone fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Nonincreasing,
    Nondecreasing,
}

/// Least-squares projection of `values` onto the monotone cone in
/// `direction`, by pool-adjacent-violators with unit weights.
///
/// Every output value is the mean of a contiguous block of inputs, so the
/// fit preserves block means and is idempotent.
pub fn isotonic_fit(values: &[f64], direction: Direction) -> Vec<f64> {
    let mut out = values.to_vec();
    isotonic_in_place(&mut out, direction);
    out
}

pub(crate) fn isotonic_in_place(values: &mut [f64], direction: Direction) {
    let sign = match direction {
        Direction::Nondecreasing => 1.0,
        Direction::Nonincreasing => -1.0,
    };
    // (sum, count) per block, in sign-adjusted space
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values.iter() {
        let mut block = (sign * v, 1usize);
        while let Some(&(sum, n)) = blocks.last() {
            if sum / n as f64 > block.0 / block.1 as f64 {
                blocks.pop();
                block = (sum + block.0, n + block.1);
            } else {
                break;
            }
        }
        blocks.push(block);
    }
    let mut i = 0;
    for (sum, n) in blocks {
        let mean = sign * (sum / n as f64);
        for v in &mut values[i..i + n] {
            *v = mean;
        }
        i += n;
    }
}

/// Trailing mean over `window` points, current point included and truncated
/// at the start of the series.
///
/// Each mean is formed as `x_j + Σ (x_i - x_j) / k` around the window's
/// first element, so a constant window reproduces its value exactly.
pub fn rolling_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "rolling window must be at least 1");
    (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let pivot = series[lo];
            let dev: f64 = series[lo..=i].iter().map(|x| x - pivot).sum();
            pivot + dev / (i + 1 - lo) as f64
        })
        .collect()
}

pub(crate) fn is_monotone(values: &[f64], direction: Direction) -> bool {
    values.windows(2).all(|w| match direction {
        Direction::Nondecreasing => w[0] <= w[1],
        Direction::Nonincreasing => w[0] >= w[1],
    })
}
