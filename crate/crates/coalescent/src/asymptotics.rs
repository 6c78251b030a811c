//! Closed-form limit objects: the limiting density of the rescaled external
//! branch length, its moments, the expansion constants of the Beta family,
//! the limiting covariance constant Δ(α), theorem-case prediction records,
//! and the log-log slope diagnostic used by the convergence checks.

use serde::Serialize;

use crate::measure::{CaseId, CoalescentMeasure, MeasureKind};
use crate::specfun::{self, lgam, QuadratureSpec};
use crate::{Error, Result};

#[inline]
fn gamma_pos(x: f64) -> f64 {
    lgam(x).exp()
}

/// Limit law of n^(α−1)·T⁽ⁿ⁾: density f(x) = κc(1+cx)^(−κ−1) on [0, ∞) with
/// scale c = C₀Γ(2−α) and tail index κ = α/(α−1).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LimitLaw {
    pub alpha: f64,
    /// scale constant C₀Γ(2−α); equals 1/Γ(α+1) for the Beta family
    pub c: f64,
    /// tail index α/(α−1): E[T^β] < ∞ iff β < κ
    pub kappa: f64,
}

/// E[T^β]: finite value or the divergence flag (β ≥ κ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum LimitMoment {
    Finite(f64),
    Infinite,
}

impl LimitMoment {
    pub fn finite(self) -> Option<f64> {
        match self {
            LimitMoment::Finite(v) => Some(v),
            LimitMoment::Infinite => None,
        }
    }
}

impl LimitLaw {
    pub fn from_measure(measure: &CoalescentMeasure) -> Self {
        let alpha = measure.alpha();
        Self {
            alpha,
            c: measure.c0_gamma(),
            kappa: alpha / (alpha - 1.0),
        }
    }

    /// f(x) = κc(1+cx)^(−κ−1), x ≥ 0.
    pub fn density(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::Domain(format!("density requires x >= 0, got {x}")));
        }
        Ok(self.kappa * self.c * (1.0 + self.c * x).powf(-self.kappa - 1.0))
    }

    /// F(x) = 1 − (1+cx)^(−κ), x ≥ 0.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::Domain(format!("cdf requires x >= 0, got {x}")));
        }
        Ok(-((-self.kappa) * (self.c * x).ln_1p()).exp_m1())
    }

    /// F⁻¹(u) for u ∈ [0, 1).
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile requires u in [0,1), got {u}")));
        }
        Ok(((-(-u).ln_1p() / self.kappa).exp() - 1.0) / self.c)
    }

    /// E[T^β] = c^(−β)·Γ(β+1)Γ(κ−β)/Γ(κ) for β < κ, +∞ otherwise.
    /// The closed form is cross-validated against quadrature of x^β·f(x) in
    /// the test suite before being trusted anywhere.
    pub fn limit_moment(&self, beta: f64) -> Result<LimitMoment> {
        if beta < 0.0 {
            return Err(Error::Domain(format!("limit_moment requires beta >= 0, got {beta}")));
        }
        if beta >= self.kappa {
            return Ok(LimitMoment::Infinite);
        }
        let ln = -beta * self.c.ln() + lgam(beta + 1.0) + lgam(self.kappa - beta) - lgam(self.kappa);
        Ok(LimitMoment::Finite(ln.exp()))
    }

    /// E[T] = (α−1)/c; α(α−1)Γ(α) for the Beta family.
    pub fn expected_value(&self) -> f64 {
        (self.alpha - 1.0) / self.c
    }

    /// Var(T); finite for every α ∈ (1, 2) since κ > 2.
    pub fn variance(&self) -> f64 {
        let m2 = match self.limit_moment(2.0) {
            Ok(LimitMoment::Finite(v)) => v,
            _ => unreachable!("kappa > 2 on (1,2)"),
        };
        let m1 = self.expected_value();
        m2 - m1 * m1
    }

    /// Quadrature of x^β f(x) on [0, ∞) through x = u/(1−u); oracle for the
    /// closed-form moment.
    pub fn moment_by_quadrature(&self, beta: f64) -> Result<f64> {
        let q = self.kappa - beta - 1.0;
        if q <= -1.0 {
            return Err(Error::Domain(format!(
                "moment_by_quadrature: beta {beta} >= kappa {} diverges",
                self.kappa
            )));
        }
        let spec = QuadratureSpec {
            singularity_exponents: (0.0, q.min(0.0)),
            ..QuadratureSpec::default()
        };
        specfun::integrate_singular(
            |u, v| {
                // v = 1-u; x = u/v
                let x = u / v;
                let fx = self.kappa * self.c * (1.0 + self.c * x).powf(-self.kappa - 1.0);
                x.powf(beta) * fx / (v * v)
            },
            &spec,
        )
    }
}

/// (1−x)^(−β) − 1 − βx, evaluated stably: series for small x (the leading
/// x² term would otherwise drown in cancellation against ν's x^(−1−α)
/// weight), expm1/ln1p form elsewhere.
fn pow_one_minus_expand(x: f64, beta: f64) -> f64 {
    if x < 1e-3 {
        // sum_{k>=2} (beta)_k^{rising} x^k / k!
        let mut term = beta * (beta + 1.0) * x * x / 2.0;
        let mut sum = term;
        for k in 3..=7 {
            term *= (beta + (k - 1) as f64) * x / k as f64;
            sum += term;
        }
        sum
    } else {
        (-beta * (-x).ln_1p()).exp_m1() - beta * x
    }
}

/// Constants of the Beta(2−α, α) family appearing in the second-order
/// expansions: the tilted-integral constants A and B and the C₂-family.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BetaConstants {
    /// A = ∫((1−x)^(1−α) − 1 − (α−1)x) ν⁽¹⁾(dx) / (C₀Γ(2−α))
    ///   = α(α²−α−1)Γ(α−1) + 1/((α−1)Γ(2−α)).
    pub a: f64,
    /// B = ∫((1−x)^(2(1−α)) − 1 − 2(α−1)x) ν⁽²⁾(dx) / (C₀Γ(2−α))
    ///   = (Γ(4−α)/Γ(4−2α) + (α²−α−1)Γ(α+2)) / (α−1).
    pub b: f64,
    pub c2: f64,
    pub c2_1: f64,
    pub c2_2: f64,
}

/// Closed-form Beta constants.
pub fn beta_constants(alpha: f64) -> Result<BetaConstants> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::Domain(format!("alpha out of (1,2): {alpha}")));
    }
    let a = alpha;
    Ok(BetaConstants {
        a: a * (a * a - a - 1.0) * gamma_pos(a - 1.0) + 1.0 / ((a - 1.0) * gamma_pos(2.0 - a)),
        b: (gamma_pos(4.0 - a) / gamma_pos(4.0 - 2.0 * a) + (a * a - a - 1.0) * gamma_pos(a + 2.0))
            / (a - 1.0),
        c2: 1.0 / (1.0 - a),
        c2_1: a / (1.0 - a),
        c2_2: (a * a + a) / (2.0 * (1.0 - a)),
    })
}

/// A by quadrature of its defining ν⁽¹⁾-integral; independent oracle for the
/// closed form, and the general-measure route.
pub fn a_constant_quadrature(measure: &CoalescentMeasure) -> Result<f64> {
    tilted_expand_integral(measure, 1, measure.alpha() - 1.0)
}

/// B by quadrature of its defining ν⁽²⁾-integral.
pub fn b_constant_quadrature(measure: &CoalescentMeasure) -> Result<f64> {
    tilted_expand_integral(measure, 2, 2.0 * (measure.alpha() - 1.0))
}

/// ∫ ((1−x)^(−β) − 1 − βx) ν⁽ˡ⁾(dx) / (C₀Γ(2−α)).
fn tilted_expand_integral(measure: &CoalescentMeasure, l: u32, beta: f64) -> Result<f64> {
    let (p, q) = measure.nu_exponents();
    let spec = QuadratureSpec {
        // integrand ~ x^2 * x^p near 0; near 1 the (1−x)^(−β) term dominates
        singularity_exponents: (p + 2.0, q + l as f64 - beta),
        ..*measure.quad_spec()
    };
    let li = l as i32;
    let v = specfun::integrate_singular(
        |x, y| {
            let bracket = if x < 0.5 {
                pow_one_minus_expand(x, beta)
            } else {
                y.powf(-beta) - 1.0 - beta * x
            };
            bracket * y.powi(li) * measure.nu_density_xy(x, y)
        },
        &spec,
    )?;
    Ok(v / measure.c0_gamma())
}

/// Δ(α): the limiting covariance constant,
/// Δ(α) = ∫((1−x)^(2−α)−1)² ν(dx) / (3−α) · ((α−1)/(C₀Γ(2−α)))³.
///
/// Beta kind: closed form
/// (α−1)²Γ(α+1)²·(Γ(4−α)/Γ(4−2α) − 2/Γ(2−α)) / (3−α);
/// general kind: quadrature of the defining integral.
pub fn delta_alpha(measure: &CoalescentMeasure) -> Result<f64> {
    match measure.kind() {
        MeasureKind::Beta => {
            let a = measure.alpha();
            let g1 = gamma_pos(a + 1.0);
            Ok((a - 1.0).powi(2) * g1 * g1
                * (gamma_pos(4.0 - a) / gamma_pos(4.0 - 2.0 * a) - 2.0 / gamma_pos(2.0 - a))
                / (3.0 - a))
        }
        MeasureKind::General(_) => delta_alpha_integral(measure),
    }
}

/// Δ(α) by quadrature of the general integral formula, for any measure kind.
pub fn delta_alpha_integral(measure: &CoalescentMeasure) -> Result<f64> {
    let a = measure.alpha();
    let (p, q) = measure.nu_exponents();
    let spec = QuadratureSpec {
        // ((1-x)^{2-a}-1)^2 ~ (2-a)^2 x^2 near 0
        singularity_exponents: (p + 2.0, q),
        ..*measure.quad_spec()
    };
    let integral = specfun::integrate_singular(
        |x, y| {
            let d = ((2.0 - a) * (-x).ln_1p()).exp_m1(); // (1-x)^{2-a} - 1
            d * d * measure.nu_density_xy(x, y)
        },
        &spec,
    )?;
    let scale = (a - 1.0) / measure.c0_gamma();
    Ok(integral / (3.0 - a) * scale.powi(3))
}

/// Residual of the covariance-constant identity
/// Δ(α)(3−α)(C₀Γ(2−α))²/(α−1)³ = B − 2A + (2(α−1)(C₂⁽²⁾−C₂⁽¹⁾) + ∫x²ν(dx))/(C₀Γ(2−α)),
/// with every piece computed independently.
pub fn beta_constants_identity_residual(measure: &CoalescentMeasure) -> Result<f64> {
    let a = measure.alpha();
    let k = beta_constants(a)?;
    let delta = delta_alpha(measure)?;
    let cg = measure.c0_gamma();
    let second = measure.second_moment()?;
    let lhs = delta * (3.0 - a) * cg * cg / (a - 1.0).powi(3);
    let rhs = k.b - 2.0 * k.a + (2.0 * (a - 1.0) * (k.c2_2 - k.c2_1) + second) / cg;
    Ok(lhs - rhs)
}

/// Identifier of the asymptotic statement a prediction record encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TheoremId {
    /// first moment, case ζ < α−1
    #[serde(rename = "T4-case1")]
    T4Case1,
    /// first moment, case ζ = α−1 (log factor)
    #[serde(rename = "T4-case2")]
    T4Case2,
    /// first moment, case ζ > α−1
    #[serde(rename = "T4-case3")]
    T4Case3,
    /// pairwise product moment, case ζ > α−1
    #[serde(rename = "T6-case3")]
    T6Case3,
    /// covariance limit, case ζ > α−1
    #[serde(rename = "C7-case3")]
    C7Case3,
    /// total-external-length mean-square error limit
    #[serde(rename = "T1")]
    T1,
}

/// Leading and second-order coefficients of an asymptotic expansion in n.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TheoremPrediction {
    pub theorem_id: TheoremId,
    pub leading_exponent: f64,
    pub leading_coeff: f64,
    pub second_exponent: Option<f64>,
    pub second_coeff: Option<f64>,
    /// true when the second-order term carries a ln n factor (ζ = α−1 case)
    pub log_factor: bool,
}

/// Second-order bracket of the first-moment case-3 expansion:
/// W = A + ((α−1)C₂⁽¹⁾ − C₂)/(C₀Γ(2−α)). The coefficient of n^(2(1−α)) is
/// (α−1)²/(C₀Γ(3−α)) · W.
pub fn t4_case3_bracket(measure: &CoalescentMeasure, a_constant: f64) -> Result<f64> {
    let alpha = measure.alpha();
    let ex = measure.expansion_constants()?;
    Ok(a_constant + ((alpha - 1.0) * ex.c2_l[0] - ex.c2) / measure.c0_gamma())
}

/// Same bracket under the alternative grouping (α−1)(C₂⁽¹⁾ − C₂); kept so the
/// convergence diagnostics can adjudicate between the two readings.
pub fn t4_case3_bracket_alt(measure: &CoalescentMeasure, a_constant: f64) -> Result<f64> {
    let alpha = measure.alpha();
    let ex = measure.expansion_constants()?;
    Ok(a_constant + (alpha - 1.0) * (ex.c2_l[0] - ex.c2) / measure.c0_gamma())
}

/// Fully populated prediction record for the requested statement. Errors when
/// the measure's declared case does not match the statement's case.
pub fn theorem_prediction(measure: &CoalescentMeasure, id: TheoremId) -> Result<TheoremPrediction> {
    let a = measure.alpha();
    let case = measure.case_id();
    let cg = measure.c0_gamma();
    let et = (a - 1.0) / cg;
    let require = |want: CaseId| -> Result<()> {
        if case != want {
            return Err(Error::CaseMismatch(format!(
                "{id:?} applies to {want:?}, but the measure is {case:?}"
            )));
        }
        Ok(())
    };
    match id {
        TheoremId::T4Case1 => {
            require(CaseId::CaseI)?;
            let z = measure.zeta();
            let q = measure.c1() * gamma_pos(2.0 - a + z) * (a - 1.0).powi(2)
                / (cg * cg * (a - 1.0 - z));
            Ok(TheoremPrediction {
                theorem_id: id,
                leading_exponent: 1.0 - a,
                leading_coeff: et,
                second_exponent: Some(1.0 - a - z),
                second_coeff: Some(-q),
                log_factor: false,
            })
        }
        TheoremId::T4Case2 => {
            require(CaseId::CaseII)?;
            Ok(TheoremPrediction {
                theorem_id: id,
                leading_exponent: 1.0 - a,
                leading_coeff: et,
                second_exponent: Some(2.0 * (1.0 - a)),
                second_coeff: Some(-(a - 1.0).powi(2) * measure.c1() / (cg * cg)),
                log_factor: true,
            })
        }
        TheoremId::T4Case3 => {
            require(CaseId::CaseIII)?;
            let a_const = match measure.kind() {
                MeasureKind::Beta => beta_constants(a)?.a,
                MeasureKind::General(_) => a_constant_quadrature(measure)?,
            };
            let w = t4_case3_bracket(measure, a_const)?;
            let coeff = (a - 1.0).powi(2) / (cg * (2.0 - a)) * w;
            Ok(TheoremPrediction {
                theorem_id: id,
                leading_exponent: 1.0 - a,
                leading_coeff: et,
                second_exponent: Some(2.0 * (1.0 - a)),
                second_coeff: Some(coeff),
                log_factor: false,
            })
        }
        TheoremId::T6Case3 => {
            require(CaseId::CaseIII)?;
            let (a_const, b_const) = match measure.kind() {
                MeasureKind::Beta => {
                    let k = beta_constants(a)?;
                    (k.a, k.b)
                }
                MeasureKind::General(_) => (
                    a_constant_quadrature(measure)?,
                    b_constant_quadrature(measure)?,
                ),
            };
            let ex = measure.expansion_constants()?;
            let second_mom = measure.second_moment()?;
            let w = t4_case3_bracket(measure, a_const)?;
            let coeff = (a - 1.0) / (3.0 - a)
                * et
                * et
                * (b_const
                    + (2.0 * (a - 1.0) * ex.c2_l[1] + second_mom - 2.0 * ex.c2) / cg
                    + 2.0 / (2.0 - a) * w);
            Ok(TheoremPrediction {
                theorem_id: id,
                leading_exponent: 2.0 * (1.0 - a),
                leading_coeff: et * et,
                second_exponent: Some(3.0 * (1.0 - a)),
                second_coeff: Some(coeff),
                log_factor: false,
            })
        }
        TheoremId::C7Case3 => {
            require(CaseId::CaseIII)?;
            Ok(TheoremPrediction {
                theorem_id: id,
                leading_exponent: 3.0 * (1.0 - a),
                leading_coeff: delta_alpha(measure)?,
                second_exponent: None,
                second_coeff: None,
                log_factor: false,
            })
        }
        TheoremId::T1 => {
            require(CaseId::CaseIII)?;
            Ok(TheoremPrediction {
                theorem_id: id,
                leading_exponent: 5.0 - 3.0 * a,
                leading_coeff: delta_alpha(measure)?,
                second_exponent: None,
                second_coeff: None,
                log_factor: false,
            })
        }
    }
}

/// Least-squares fit of ln|value| against ln n.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fit ln|v| = slope·ln n + intercept over a series of (n, v) pairs.
/// Refused for fewer than 4 points, zeros, or sign changes.
pub fn fit_convergence_slope(series: &[(f64, f64)]) -> Result<SlopeFit> {
    if series.len() < 4 {
        return Err(Error::FitRefused(format!(
            "insufficient points: {} < 4",
            series.len()
        )));
    }
    let sign = series[0].1.signum();
    if series.iter().any(|&(_, v)| v == 0.0) {
        return Err(Error::FitRefused("series contains zeros".into()));
    }
    if series.iter().any(|&(_, v)| v.signum() != sign) {
        return Err(Error::FitRefused("series changes sign".into()));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .map(|&(n, v)| (n.ln(), v.abs().ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return Err(Error::FitRefused("degenerate abscissae".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(x, y) in &pts {
        let fit = slope * x + intercept;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Two-sided Kolmogorov–Smirnov distance between a sample and a continuous
/// CDF. Sorts the sample in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{BuiltinDensity, MeasureConfig, OmegaSpec};

    fn law(alpha: f64) -> LimitLaw {
        LimitLaw::from_measure(&CoalescentMeasure::beta(alpha).unwrap())
    }

    #[test]
    fn density_at_zero_and_normalization() {
        let l = law(1.5);
        assert!((l.density(0.0).unwrap() - 2.2567583341910251).abs() < 1e-12);
        assert!(l.density(-0.1).is_err());
        // integral over [0, inf) via x = u/(1-u)
        let spec = QuadratureSpec::with_exponents(0.0, l.kappa - 1.0 - 2.0);
        let total = specfun::integrate_singular(
            |u, v| l.density(u / v).unwrap() / (v * v),
            &spec,
        )
        .unwrap();
        assert!((total - 1.0).abs() < 1e-8, "density mass {total}");
    }

    #[test]
    fn cdf_quantile_roundtrip() {
        let l = law(1.5);
        for i in 1..10 {
            let u = i as f64 / 10.0;
            let x = l.quantile(u).unwrap();
            assert!((l.cdf(x).unwrap() - u).abs() < 1e-12);
        }
        assert_eq!(l.cdf(0.0).unwrap(), 0.0);
        assert!(l.quantile(1.0).is_err());
    }

    #[test]
    fn limit_moment_values() {
        let l = law(1.5);
        let m0 = l.limit_moment(0.0).unwrap().finite().unwrap();
        assert!((m0 - 1.0).abs() < 1e-14);
        let m1 = l.limit_moment(1.0).unwrap().finite().unwrap();
        assert!((m1 - 0.66467019408956851).abs() < 1e-13);
        assert!((l.expected_value() - m1).abs() < 1e-13);
        let m2 = l.limit_moment(2.0).unwrap().finite().unwrap();
        assert!((m2 - 1.7671458676442587).abs() < 1e-12);
        assert!((l.variance() - 1.3253594007331940).abs() < 1e-12);
        // kappa = 3 at alpha = 1.5: third moment diverges
        assert_eq!(l.limit_moment(3.0).unwrap(), LimitMoment::Infinite);
        assert!(l.limit_moment(2.99).unwrap().finite().is_some());
        // alpha = 1.4: kappa = 3.5, third moment finite
        let l14 = law(1.4);
        let m3 = l14.limit_moment(3.0).unwrap().finite().unwrap();
        assert!((m3 - 6.1332744610088553).abs() < 1e-11, "m3 = {m3}");
        assert!(l.limit_moment(-1.0).is_err());
    }

    #[test]
    fn limit_moment_matches_quadrature() {
        for &alpha in &[1.25, 1.5, 1.75] {
            let l = law(alpha);
            for &beta in &[0.5, 1.0, 2.0] {
                let closed = l.limit_moment(beta).unwrap().finite().unwrap();
                let quad = l.moment_by_quadrature(beta).unwrap();
                assert!(
                    ((closed - quad) / closed).abs() < 1e-7,
                    "alpha={alpha} beta={beta}: closed {closed} vs quad {quad}"
                );
            }
        }
    }

    #[test]
    fn beta_constants_frozen_values() {
        let k = beta_constants(1.5).unwrap();
        assert!((k.a - 0.46370897300594406).abs() < 1e-12, "A = {}", k.a);
        assert!((k.b - 0.99700529113435277).abs() < 1e-12, "B = {}", k.b);
        assert!((k.c2 - (-2.0)).abs() < 1e-14);
        assert!((k.c2_1 - (-3.0)).abs() < 1e-14);
        assert!((k.c2_2 - (-3.75)).abs() < 1e-14);
    }

    #[test]
    fn a_b_constants_match_quadrature() {
        for &alpha in &[1.25, 1.5, 1.75] {
            let m = CoalescentMeasure::beta(alpha).unwrap();
            let k = beta_constants(alpha).unwrap();
            let aq = a_constant_quadrature(&m).unwrap();
            let bq = b_constant_quadrature(&m).unwrap();
            assert!(
                ((k.a - aq) / aq).abs() < 1e-9,
                "alpha={alpha}: A closed {} vs quad {aq}",
                k.a
            );
            assert!(
                ((k.b - bq) / bq).abs() < 1e-9,
                "alpha={alpha}: B closed {} vs quad {bq}",
                k.b
            );
        }
    }

    #[test]
    fn delta_frozen_and_dual_route() {
        let cases = [
            (1.25, 0.0083780139360346110),
            (1.5, 0.059187965232445203),
            (1.75, 0.10196920879572346),
        ];
        for (alpha, want) in cases {
            let m = CoalescentMeasure::beta(alpha).unwrap();
            let closed = delta_alpha(&m).unwrap();
            assert!(
                ((closed - want) / want).abs() < 1e-12,
                "delta({alpha}) = {closed}, want {want}"
            );
            let quad = delta_alpha_integral(&m).unwrap();
            assert!(
                ((closed - quad) / closed).abs() < 1e-8,
                "alpha={alpha}: closed {closed} vs integral {quad}"
            );
            assert!(closed > 0.0);
        }
        // strictly positive across the clamped range
        for i in 0..=18 {
            let alpha = 1.05 + 0.05 * i as f64;
            let m = CoalescentMeasure::beta_unclamped(alpha).unwrap();
            assert!(delta_alpha(&m).unwrap() > 0.0, "delta({alpha}) <= 0");
        }
    }

    #[test]
    fn identity_residual_small() {
        for &alpha in &[1.25, 1.5, 1.75] {
            let m = CoalescentMeasure::beta(alpha).unwrap();
            let r = beta_constants_identity_residual(&m).unwrap();
            assert!(r.abs() < 1e-10, "alpha={alpha}: residual {r}");
        }
    }

    #[test]
    fn t4_case3_prediction_beta() {
        let frozen = [
            (1.25, 0.30819532491548322),
            (1.5, 0.75),
            (1.75, 1.3308321601324668),
        ];
        for (alpha, want_k) in frozen {
            let m = CoalescentMeasure::beta(alpha).unwrap();
            let p = theorem_prediction(&m, TheoremId::T4Case3).unwrap();
            assert_eq!(p.leading_exponent, 1.0 - alpha);
            let l = LimitLaw::from_measure(&m);
            assert!((p.leading_coeff - l.expected_value()).abs() < 1e-12);
            let k = p.second_coeff.unwrap();
            assert!(
                ((k - want_k) / want_k).abs() < 1e-10,
                "alpha={alpha}: K = {k}, want {want_k}"
            );
            assert!(!p.log_factor);
        }
    }

    #[test]
    fn prediction_case_mismatch_and_case2() {
        let m = CoalescentMeasure::beta(1.5).unwrap();
        assert!(matches!(
            theorem_prediction(&m, TheoremId::T4Case1),
            Err(Error::CaseMismatch(_))
        ));
        // synthetic case-II measure: zeta = alpha - 1
        let cfg = MeasureConfig::General {
            alpha: 1.5,
            zeta: 0.5,
            c0: 0.4,
            c1: 0.2,
            omega: OmegaSpec::OnePlusS,
            density: BuiltinDensity::PowerLaw,
            allow_extreme_alpha: false,
        };
        let m2 = CoalescentMeasure::from_config(&cfg).unwrap();
        let p = theorem_prediction(&m2, TheoremId::T4Case2).unwrap();
        assert!(p.log_factor);
        assert_eq!(p.second_exponent, Some(-1.0));
        // C7 prediction for Beta
        let p = theorem_prediction(&m, TheoremId::C7Case3).unwrap();
        assert_eq!(p.leading_exponent, 3.0 * (1.0 - 1.5));
        assert!((p.leading_coeff - 0.059187965232445203).abs() < 1e-12);
    }

    #[test]
    fn slope_fit_oracles() {
        let series: Vec<(f64, f64)> = (3..10).map(|i| {
            let n = (1 << i) as f64;
            (n, n.powf(-0.5))
        }).collect();
        let fit = fit_convergence_slope(&series).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let flat: Vec<(f64, f64)> = (3..8).map(|i| ((1 << i) as f64, 3.0)).collect();
        let fit = fit_convergence_slope(&flat).unwrap();
        assert!(fit.slope.abs() < 1e-12);

        assert!(matches!(
            fit_convergence_slope(&series[..3]),
            Err(Error::FitRefused(_))
        ));
        let mixed = vec![(8.0, 1.0), (16.0, -1.0), (32.0, 1.0), (64.0, 1.0)];
        assert!(fit_convergence_slope(&mixed).is_err());
        let zeros = vec![(8.0, 1.0), (16.0, 0.0), (32.0, 1.0), (64.0, 1.0)];
        assert!(fit_convergence_slope(&zeros).is_err());
    }

    #[test]
    fn ks_statistic_uniform() {
        // deterministic stratified sample from U(0,1): KS ~ 1/(2n)
        let n = 1000;
        let mut xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!(d <= 0.5 / n as f64 + 1e-12, "d = {d}");
        // shifted sample has KS ~ shift
        let mut xs: Vec<f64> = (0..n).map(|i| ((i as f64 + 0.5) / n as f64) * 0.9).collect();
        let d = ks_statistic(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.1).abs() < 0.01, "d = {d}");
    }
}
