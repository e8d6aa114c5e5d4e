//! Exhaustive planner scan written independently of the library's search.

use dpscale_core::accounting::{calibrate_nbr, AccountingSetup, Batching, PrivacySpec};
use dpscale_core::lawfit::{LossModel, ParametricLaw};
use dpscale_core::math::log_lattice;
use dpscale_core::planner::iteration_lattice;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteBest {
    pub m: f64,
    pub t: u64,
    pub batch: f64,
    pub nbr: f64,
    pub loss: f64,
}

/// Scan every lattice point; keep the lowest loss, ties to smaller M then T.
pub fn brute_force_optimum(
    law: &ParametricLaw,
    compute: f64,
    privacy: Option<PrivacySpec>,
    data: u64,
    seq_len: f64,
    density: u32,
) -> Option<BruteBest> {
    let d = law.domain();
    let mut best: Option<BruteBest> = None;
    for m in log_lattice(d.m.0, d.m.1, density) {
        for t in iteration_lattice(d.t.0, d.t.1, density) {
            let batch = compute / (6.0 * m * seq_len * t as f64);
            if batch < 1.0 || batch > data as f64 {
                continue;
            }
            let nbr = match privacy {
                None => 0.0,
                Some(spec) => {
                    let setup = AccountingSetup::new(data, batch, t, Batching::Poisson).unwrap();
                    match calibrate_nbr(&spec, &setup) {
                        Ok(c) => c.nbr.value(),
                        Err(_) => continue,
                    }
                }
            };
            let Ok(loss) = law.query(m, t as f64, nbr) else { continue };
            let better = match best {
                None => true,
                Some(b) => loss < b.loss || (loss == b.loss && (m, t) < (b.m, b.t)),
            };
            if better {
                best = Some(BruteBest { m, t, batch, nbr, loss });
            }
        }
    }
    best
}
