//! Error bound for piecewise-linear interpolation in log coordinates.

/// `Σ_d h_d²/8 · sup |∂²f/∂x_d²|` over the cell spanned by `lo`..`hi`, with
/// `x_d` the log of each coordinate. The supremum is taken over a 5×5×5
/// sample of the cell using central differences, padded by 5%.
pub fn trilinear_bound(f: impl Fn(f64, f64, f64) -> f64, lo: [f64; 3], hi: [f64; 3]) -> f64 {
    let (a, b) = (lo.map(f64::ln), hi.map(f64::ln));
    let g = |x: [f64; 3]| f(x[0].exp(), x[1].exp(), x[2].exp());
    let mut bound = 0.0;
    for d in 0..3 {
        let h = b[d] - a[d];
        let eps = h * 1e-3;
        let mut sup = 0.0f64;
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    let x = [0, 1, 2].map(|e| a[e] + (b[e] - a[e]) * [i, j, k][e] as f64 / 4.0);
                    let mut up = x;
                    let mut dn = x;
                    up[d] += eps;
                    dn[d] -= eps;
                    sup = sup.max(((g(up) - 2.0 * g(x) + g(dn)) / (eps * eps)).abs());
                }
            }
        }
        bound += h * h / 8.0 * sup;
    }
    1.05 * bound
}
