use alloc::string::String;
use alloc::vec::Vec;

use super::{evaluate, optimal_allocation_with, Budgets, PlanError, PlanResult, PlannerOptions, TrainingConfig};
use crate::accounting::PrivacySpec;
use crate::lawfit::LossModel;

/// A fixed training configuration to compare against.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Baseline {
    pub name: String,
    pub model_params: f64,
    pub batch_size: f64,
    pub iterations: u64,
}

impl Baseline {
    pub fn config(&self, seq_len: f64) -> TrainingConfig {
        TrainingConfig {
            model_params: self.model_params,
            batch_size: self.batch_size,
            iterations: self.iterations,
            seq_len,
        }
    }
}

/// Three BERT-sized configurations of about 1e19 FLOPs at S = 512, from a
/// scaling-law-style large model to a small model with huge batches.
pub fn default_baselines() -> Vec<Baseline> {
    let b = |name: &str, m: f64, batch: f64, t: u64| Baseline {
        name: String::from(name),
        model_params: m,
        batch_size: batch,
        iterations: t,
    };
    alloc::vec![
        b("BertLarge", 335e6, 1295.0, 7500),
        b("BertMedium", 41e6, 15879.0, 5000),
        b("BertTiny", 4.5e6, 283_061.0, 2500),
    ]
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselinePoint {
    pub epsilon: f64,
    pub baseline: PlanResult,
    /// Compute-optimal configuration at the baseline's compute; the
    /// baseline itself is among the candidates.
    pub optimal: Option<PlanResult>,
    /// `C_baseline / C'` for the smallest `C'` on the savings grid whose
    /// optimum is no worse than the baseline; at least 1.
    pub savings_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselineSeries {
    pub baseline: Baseline,
    pub compute: f64,
    pub points: Vec<BaselinePoint>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselineComparison {
    pub data: u64,
    pub delta: f64,
    pub series: Vec<BaselineSeries>,
}

/// Compute below the baseline's is searched on `savings_density` points per
/// decade, at most `savings_decades` decades down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SavingsGrid {
    pub density: u32,
    pub decades: u32,
}

impl Default for SavingsGrid {
    fn default() -> Self {
        Self { density: 4, decades: 3 }
    }
}

/// Each baseline across `epsilons` alongside the compute-optimal
/// configuration at the same compute, data budget `data` and δ.
pub fn compare_baselines<L: LossModel>(
    baselines: &[Baseline],
    data: u64,
    delta: f64,
    epsilons: &[f64],
    law: &L,
    options: &PlannerOptions,
    savings: SavingsGrid,
) -> Result<BaselineComparison, PlanError> {
    let mut series = Vec::with_capacity(baselines.len());
    for base in baselines {
        let config = base.config(options.seq_len);
        let compute = config.compute();
        if !(compute > 0.0) || !compute.is_finite() || base.iterations == 0 {
            return Err(PlanError::InvalidInput { name: "baseline", reason: "needs positive M, B and T" });
        }
        let mut points = Vec::with_capacity(epsilons.len());
        for &eps in epsilons {
            let budgets = Budgets { compute, privacy: Some(PrivacySpec::new(eps, delta)?), data };
            let baseline = evaluate(&config, &budgets, law, options.rel_tol)?;
            let optimal = match optimal_allocation_with(&budgets, law, options, &[config]) {
                Ok(a) => Some(a.best),
                Err(PlanError::NoFeasibleConfig { .. }) => None,
                Err(e) => return Err(e),
            };
            let savings_factor = match baseline.predicted_loss {
                Some(target) => Some(savings_factor(&budgets, target, law, options, savings)?),
                None => None,
            };
            points.push(BaselinePoint { epsilon: eps, baseline, optimal, savings_factor });
        }
        series.push(BaselineSeries { baseline: base.clone(), compute, points });
    }
    Ok(BaselineComparison { data, delta, series })
}

/// Walk down from the budget's compute until the lattice optimum is worse
/// than `target`.
fn savings_factor<L: LossModel>(
    budgets: &Budgets,
    target: f64,
    law: &L,
    options: &PlannerOptions,
    grid: SavingsGrid,
) -> Result<f64, PlanError> {
    let mut factor = 1.0;
    let steps = grid.density.saturating_mul(grid.decades);
    for k in 1..=steps {
        let f = libm::pow(10.0, f64::from(k) / f64::from(grid.density.max(1)));
        let b = Budgets { compute: budgets.compute / f, ..*budgets };
        match optimal_allocation_with(&b, law, options, &[]) {
            Ok(a) if a.best.predicted_loss.is_some_and(|l| l <= target) => factor = f,
            Ok(_) | Err(PlanError::NoFeasibleConfig { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(factor)
}
