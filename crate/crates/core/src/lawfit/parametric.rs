use super::{Domain, FitMetadata, LawError, LossModel};
use crate::math::sigmoid;

/// Examples per step in the measurement runs; converts iterations to the
/// example count `N` the parametric forms are written in.
pub const DEFAULT_EXAMPLES_PER_STEP: f64 = 1024.0;

/// Model-size search interval for [`optimal_model_size`].
pub const MODEL_SIZE_BRACKET: (f64, f64) = (1e5, 1e11);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LawForm {
    /// `E + A/M^α + B/N^β + C·σ̄^γ`
    L1,
    /// `E + A/M^α + B/N^β + C·s(σ̄)^γ / M^α₂` with `s` the logistic transform
    L2,
}

/// `s(σ̄) = logistic((ln σ̄ + shift) / scale)`, mapping `(0, ∞)` onto `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NbrTransform {
    pub shift: f64,
    pub scale: f64,
}

impl Default for NbrTransform {
    fn default() -> Self {
        Self { shift: 8.0, scale: 1.6 }
    }
}

impl NbrTransform {
    pub fn apply(&self, nbr: f64) -> f64 {
        if nbr <= 0.0 {
            return 0.0;
        }
        sigmoid((libm::log(nbr) + self.shift) / self.scale)
    }

    /// Inverse on `(0, 1)`.
    pub fn invert(&self, y: f64) -> f64 {
        let logit = libm::log(y) - libm::log1p(-y);
        libm::exp(self.scale * logit - self.shift)
    }
}

/// Coefficients of either form; `alpha2` is unused (zero) for L1.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Coefficients {
    pub e: f64,
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
    pub c: f64,
    pub gamma: f64,
    pub alpha2: f64,
}

impl Coefficients {
    fn validate(&self) -> Result<(), LawError> {
        let fields = [
            ("e", self.e),
            ("a", self.a),
            ("alpha", self.alpha),
            ("b", self.b),
            ("beta", self.beta),
            ("c", self.c),
            ("gamma", self.gamma),
            ("alpha2", self.alpha2),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(LawError::InvalidCoefficient { name, reason: "must be finite" });
            }
        }
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c)] {
            if v < 0.0 {
                return Err(LawError::InvalidCoefficient { name, reason: "must be nonnegative" });
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if v <= 0.0 {
                return Err(LawError::InvalidCoefficient { name, reason: "must be positive" });
            }
        }
        Ok(())
    }
}

/// A closed-form loss law.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "ParametricRepr", into = "ParametricRepr"))]
pub struct ParametricLaw {
    form: LawForm,
    coefficients: Coefficients,
    transform: NbrTransform,
    examples_per_step: f64,
    domain: Domain,
    fit_metadata: Option<FitMetadata>,
}

impl ParametricLaw {
    pub fn new(form: LawForm, coefficients: Coefficients, domain: Domain) -> Result<Self, LawError> {
        let mut coefficients = coefficients;
        if form == LawForm::L1 {
            coefficients.alpha2 = 0.0;
        }
        coefficients.validate()?;
        domain.validate()?;
        Ok(Self {
            form,
            coefficients,
            transform: NbrTransform::default(),
            examples_per_step: DEFAULT_EXAMPLES_PER_STEP,
            domain,
            fit_metadata: None,
        })
    }

    pub fn with_transform(mut self, transform: NbrTransform) -> Result<Self, LawError> {
        if !(transform.scale > 0.0) || !transform.scale.is_finite() || !transform.shift.is_finite() {
            return Err(LawError::InvalidInput("transform scale must be positive and finite"));
        }
        self.transform = transform;
        Ok(self)
    }

    pub fn with_examples_per_step(mut self, examples: f64) -> Result<Self, LawError> {
        if !(examples > 0.0) || !examples.is_finite() {
            return Err(LawError::InvalidInput("examples per step must be positive"));
        }
        self.examples_per_step = examples;
        Ok(self)
    }

    pub fn with_domain(mut self, domain: Domain) -> Result<Self, LawError> {
        domain.validate()?;
        self.domain = domain;
        Ok(self)
    }

    pub(crate) fn with_fit_metadata(mut self, meta: FitMetadata) -> Self {
        self.fit_metadata = Some(meta);
        self
    }

    pub fn form(&self) -> LawForm {
        self.form
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coefficients
    }

    pub fn transform(&self) -> NbrTransform {
        self.transform
    }

    pub fn examples_per_step(&self) -> f64 {
        self.examples_per_step
    }

    pub fn fit_metadata(&self) -> Option<&FitMetadata> {
        self.fit_metadata.as_ref()
    }

    /// Loss at model size `m`, `n_examples` training examples and
    /// noise-batch ratio `nbr` (σ̄ = 0 drops the noise term).
    pub fn predict(&self, m: f64, n_examples: f64, nbr: f64) -> f64 {
        let k = &self.coefficients;
        let ln_m = libm::log(m);
        let mut loss = k.e + k.a * libm::exp(-k.alpha * ln_m) + k.b * libm::exp(-k.beta * libm::log(n_examples));
        if nbr > 0.0 && k.c > 0.0 {
            loss += match self.form {
                LawForm::L1 => k.c * libm::exp(k.gamma * libm::log(nbr)),
                LawForm::L2 => {
                    let s = self.transform.apply(nbr);
                    k.c * libm::exp(k.gamma * libm::log(s) - k.alpha2 * ln_m)
                }
            };
        }
        loss
    }

    /// Loss after `t` iterations, ignoring the domain.
    pub fn predict_at_iterations(&self, m: f64, t: f64, nbr: f64) -> f64 {
        self.predict(m, self.examples_per_step * t, nbr)
    }

    /// Fixture with the L2 exponents α = 0.47, β = 0.12, γ = 0.95,
    /// α₂ = -0.07; the remaining coefficients are made up so that losses
    /// land in a BERT-like 2 to 8 nat range.
    pub fn l2_fixture() -> Self {
        let k = Coefficients { e: 1.0, a: 400.0, alpha: 0.47, b: 20.0, beta: 0.12, c: 1.0, gamma: 0.95, alpha2: -0.07 };
        Self::new(LawForm::L2, k, Self::fixture_domain()).expect("fixture coefficients are valid")
    }

    /// Fixture with the L1 exponents α = 0.71, β = 12.87, γ = 0.19; the
    /// steep β leaves the data term negligible except at tiny N.
    pub fn l1_fixture() -> Self {
        let k = Coefficients {
            e: 1.2,
            a: 1.0e5,
            alpha: 0.71,
            b: libm::exp(205.0),
            beta: 12.87,
            c: 8.0,
            gamma: 0.19,
            alpha2: 0.0,
        };
        Self::new(LawForm::L1, k, Self::fixture_domain()).expect("fixture coefficients are valid")
    }

    /// The measured range used by the fixtures: M in [4.5M, 784M], up to
    /// 2^20 iterations and σ̄ in [2^-23, 2^-6], plus σ̄ = 0.
    pub fn fixture_domain() -> Domain {
        Domain {
            m: (4.5e6, 7.84e8),
            t: (1.0e2, 1_048_576.0),
            nbr: (libm::ldexp(1.0, -23), libm::ldexp(1.0, -6)),
            nonprivate: true,
        }
    }
}

impl LossModel for ParametricLaw {
    fn query(&self, m: f64, t: f64, nbr: f64) -> Result<f64, LawError> {
        self.domain.check(m, t, nbr)?;
        Ok(self.predict_at_iterations(m, t, nbr))
    }

    fn domain(&self) -> Domain {
        self.domain
    }
}

/// Serialized layout of [`ParametricLaw`]; validated on the way in.
#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct ParametricRepr {
    form: LawForm,
    coefficients: Coefficients,
    transform: NbrTransform,
    examples_per_step: f64,
    domain: Domain,
    #[serde(default)]
    fit_metadata: Option<FitMetadata>,
}

#[cfg(feature = "serde")]
impl TryFrom<ParametricRepr> for ParametricLaw {
    type Error = LawError;

    fn try_from(r: ParametricRepr) -> Result<Self, LawError> {
        let law = ParametricLaw::new(r.form, r.coefficients, r.domain)?
            .with_transform(r.transform)?
            .with_examples_per_step(r.examples_per_step)?;
        Ok(match r.fit_metadata {
            Some(m) => law.with_fit_metadata(m),
            None => law,
        })
    }
}

#[cfg(feature = "serde")]
impl From<ParametricLaw> for ParametricRepr {
    fn from(l: ParametricLaw) -> Self {
        Self {
            form: l.form,
            coefficients: l.coefficients,
            transform: l.transform,
            examples_per_step: l.examples_per_step,
            domain: l.domain,
            fit_metadata: l.fit_metadata,
        }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Compute-optimal model size at noise-batch ratio `nbr`, with the example
/// count tied to `M` by `C = 6·M·S·N`.
///
/// The objective is a sum of exponentials in `ln M` with nonnegative
/// weights, hence convex, so golden-section search on `ln M` over `bracket`
/// finds the minimum; it stops at relative width 1e-3.
pub fn optimal_model_size(
    law: &ParametricLaw,
    compute: f64,
    nbr: f64,
    seq_len: f64,
    bracket: (f64, f64),
) -> Result<f64, LawError> {
    if !(compute > 0.0) || !compute.is_finite() {
        return Err(LawError::InvalidInput("compute must be positive and finite"));
    }
    if !(seq_len > 0.0) || !(nbr >= 0.0) {
        return Err(LawError::InvalidInput("sequence length must be positive and nbr nonnegative"));
    }
    if !(bracket.0 > 0.0 && bracket.0 < bracket.1) {
        return Err(LawError::InvalidInput("model-size bracket must be increasing and positive"));
    }
    let k = compute / (6.0 * seq_len);
    let f = |x: f64| {
        let m = libm::exp(x);
        law.predict(m, k / m, nbr)
    };
    let (mut a, mut b) = (libm::log(bracket.0), libm::log(bracket.1));
    let tol = libm::log1p(1e-3);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    Ok(libm::exp(0.5 * (a + b)))
}
