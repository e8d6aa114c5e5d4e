//! Brute-force monotone least squares.
//!
//! The optimum is constant on contiguous blocks, each at its block mean, so
//! scanning every split of the sequence into blocks and keeping the best
//! split whose means are ordered finds it exactly.

pub fn brute_force_isotonic(values: &[f64], increasing: bool) -> Vec<f64> {
    let n = values.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cuts in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        for i in 0..n {
            let boundary = i == n - 1 || cuts & (1 << i) != 0;
            if boundary {
                let block = &values[start..=i];
                let mean = block.iter().sum::<f64>() / block.len() as f64;
                fit.extend(std::iter::repeat_n(mean, block.len()));
                start = i + 1;
            }
        }
        let ordered = fit.windows(2).all(|w| if increasing { w[0] <= w[1] } else { w[0] >= w[1] });
        if !ordered {
            continue;
        }
        let sse: f64 = fit.iter().zip(values).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(s, _)| sse < *s - 1e-12) {
            best = Some((sse, fit));
        }
    }
    best.expect("a single block is always ordered").1
}

/// Every sequence of length `len` over `alphabet`.
pub fn all_sequences(alphabet: &[f64], len: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                alphabet.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}
