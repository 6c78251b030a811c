//! Exact transition structure of the n-coalescent: collision rates λ_{b,a},
//! total rates g_b and their (1−x)ˢ-tilted variants g_b⁽ˢ⁾, jump-chain rows
//! p_{n,k}, the first-jump decrement law, and tilted falling-factorial sums.
//!
//! All rate arithmetic is carried in log space and exponentiated last: the
//! binomial factors alone overflow f64 long before n_max = 2¹⁴, while the
//! products C(b,a)·λ_{b,a} stay bounded by g_b.

use rayon::prelude::*;

use crate::measure::{CoalescentMeasure, MeasureKind};
use crate::numeric::CompensatedSum;
use crate::specfun::{self, falling_factorial_ratio, lgam, QuadratureSpec};
use crate::{Error, Result};

/// Abort threshold for the pre-renormalization residual of a jump row.
/// Residuals above this are formula bugs, not rounding noise.
const ROW_RESIDUAL_LIMIT: f64 = 1e-12;

/// Collision rate λ_{b,a} = ∫₀¹ x^(a−2)(1−x)^(b−a) Λ(dx) for 2 ≤ a ≤ b.
pub fn lambda_rate(measure: &CoalescentMeasure, b: u32, a: u32) -> Result<f64> {
    if a < 2 || a > b {
        return Err(Error::Domain(format!(
            "lambda_rate requires 2 <= a <= b, got a={a}, b={b}"
        )));
    }
    match measure.kind() {
        MeasureKind::Beta => {
            let al = measure.alpha();
            let ln = specfun::log_beta(a as f64 - al, (b - a) as f64 + al)?
                - specfun::log_beta(2.0 - al, al)?;
            Ok(ln.exp())
        }
        MeasureKind::General(_) => {
            let (p, q) = measure.nu_exponents();
            let spec = QuadratureSpec {
                singularity_exponents: (p + a as f64, q + (b - a) as f64),
                ..*measure.quad_spec()
            };
            let (ai, bai) = (a as i32, (b - a) as i32);
            specfun::integrate_singular(
                |x, y| x.powi(ai) * y.powi(bai) * measure.nu_density_xy(x, y),
                &spec,
            )
        }
    }
}

/// Total collision rate of the ν⁽ˢ⁾-coalescent at b blocks:
/// g_b⁽ˢ⁾ = Σ_{a=2}^{b} C(b,a)·λ⁽ˢ⁾_{b,a}; s = 0 gives g_b.
pub fn total_rate(measure: &CoalescentMeasure, b: u32, s: u32) -> Result<f64> {
    if b < 2 {
        return Err(Error::Domain(format!("total_rate requires b >= 2, got {b}")));
    }
    let mut sum = CompensatedSum::new();
    match measure.kind() {
        MeasureKind::Beta => {
            let al = measure.alpha();
            let ln_norm = specfun::log_beta(2.0 - al, al)?;
            let bf = b as f64;
            let sf = s as f64;
            for a in 2..=b {
                let af = a as f64;
                let ln_w = lgam(bf + 1.0) - lgam(af + 1.0) - lgam(bf - af + 1.0)
                    + lgam(af - al)
                    + lgam(bf - af + al + sf)
                    - lgam(bf + sf)
                    - ln_norm;
                sum.add(ln_w.exp());
            }
        }
        MeasureKind::General(_) => {
            let (p, q) = measure.nu_exponents();
            let bf = b as f64;
            for a in 2..=b {
                let af = a as f64;
                let spec = QuadratureSpec {
                    singularity_exponents: (p + af, q + (b - a + s) as f64),
                    ..*measure.quad_spec()
                };
                let (ai, yi) = (a as i32, (b - a + s) as i32);
                let lam = specfun::integrate_singular(
                    |x, y| x.powi(ai) * y.powi(yi) * measure.nu_density_xy(x, y),
                    &spec,
                )?;
                let ln_binom = lgam(bf + 1.0) - lgam(af + 1.0) - lgam(bf - af + 1.0);
                sum.add((ln_binom + lam.ln()).exp());
            }
        }
    }
    Ok(sum.value())
}

/// One jump-chain row: probabilities of moving from n blocks to k blocks,
/// k = 1..n−1, renormalized to sum to exactly 1.
#[derive(Clone, Debug)]
pub struct JumpRow {
    /// probs[k−1] = P(jump n → k).
    pub probs: Vec<f64>,
    /// |Σ − 1| before renormalization.
    pub residual: f64,
}

/// Cached total rates plus the log-gamma tables needed to stream jump rows.
///
/// Rows are computed on demand in O(n) each and never stored; only the g
/// column and build diagnostics persist, keeping the table O(n_max) in
/// memory while the full build costs O(n_max²) time.
#[derive(Clone, Debug)]
pub struct RateTable {
    measure: CoalescentMeasure,
    n_max: usize,
    /// g[b] valid for b = 2..=n_max.
    g: Vec<f64>,
    max_row_residual: f64,
    /// Beta fast path: fa[a] = lnΓ(a−α) − lnΓ(a+1), hm[m] = lnΓ(m+α) − lnΓ(m+1).
    fa: Vec<f64>,
    hm: Vec<f64>,
    ln_norm: f64,
}

impl RateTable {
    /// Build g_2..g_{n_max}, verifying every jump row normalizes to 1 within
    /// 1e−12 before renormalization. O(n_max²) work, parallel across rows.
    pub fn build(measure: &CoalescentMeasure, n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::Domain(format!(
                "RateTable requires n_max >= 2, got {n_max}"
            )));
        }
        let mut table = Self {
            measure: measure.clone(),
            n_max,
            g: vec![f64::NAN; n_max + 1],
            max_row_residual: 0.0,
            fa: Vec::new(),
            hm: Vec::new(),
            ln_norm: 0.0,
        };
        if matches!(measure.kind(), MeasureKind::Beta) {
            let al = measure.alpha();
            table.ln_norm = specfun::log_beta(2.0 - al, al)?;
            table.fa = (0..=n_max)
                .map(|a| {
                    if a >= 2 {
                        lgam(a as f64 - al) - lgam(a as f64 + 1.0)
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            table.hm = (0..=n_max)
                .map(|m| lgam(m as f64 + al) - lgam(m as f64 + 1.0))
                .collect();
        }
        let rows: Result<Vec<(f64, f64)>> = (2..=n_max)
            .into_par_iter()
            .map(|n| {
                let (g, residual) = table.row_sum(n)?;
                if !(residual.abs() < ROW_RESIDUAL_LIMIT) {
                    return Err(Error::Domain(format!(
                        "jump row {n} residual {residual:e} exceeds {ROW_RESIDUAL_LIMIT:e}; aborting build"
                    )));
                }
                Ok((g, residual))
            })
            .collect();
        let rows = rows?;
        for (i, (g, residual)) in rows.into_iter().enumerate() {
            table.g[i + 2] = g;
            table.max_row_residual = table.max_row_residual.max(residual.abs());
        }
        Ok(table)
    }

    pub fn measure(&self) -> &CoalescentMeasure {
        &self.measure
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Total rate g_b.
    pub fn g(&self, b: usize) -> f64 {
        self.g[b]
    }

    /// Largest pre-renormalization row residual seen during the build.
    pub fn max_row_residual(&self) -> f64 {
        self.max_row_residual
    }

    /// ln(C(n,a)·λ_{n,a}) for the Beta fast path.
    #[inline]
    fn ln_weight(&self, n: usize, a: usize) -> f64 {
        (n as f64).ln() + self.fa[a] + self.hm[n - a] - self.ln_norm
    }

    /// Un-normalized merger-size weights w_a = C(n,a)·λ_{n,a} for a = 2..=n,
    /// written into `buf[a−2]`; returns (Neumaier sum, row residual).
    fn fill_weights(&self, n: usize, buf: &mut Vec<f64>) -> Result<f64> {
        buf.clear();
        buf.reserve(n - 1);
        match self.measure.kind() {
            MeasureKind::Beta => {
                for a in 2..=n {
                    buf.push(self.ln_weight(n, a).exp());
                }
            }
            MeasureKind::General(_) => {
                for a in 2..=n {
                    let lam = lambda_rate(&self.measure, n as u32, a as u32)?;
                    let nf = n as f64;
                    let af = a as f64;
                    let ln_binom = lgam(nf + 1.0) - lgam(af + 1.0) - lgam(nf - af + 1.0);
                    buf.push((ln_binom + lam.ln()).exp());
                }
            }
        }
        let mut sum = CompensatedSum::new();
        for &w in buf.iter() {
            sum.add(w);
        }
        Ok(sum.value())
    }

    /// (g_n, row residual) without keeping the row.
    fn row_sum(&self, n: usize) -> Result<(f64, f64)> {
        let mut buf = Vec::new();
        let g = self.fill_weights(n, &mut buf)?;
        let mut psum = CompensatedSum::new();
        for &w in &buf {
            psum.add(w / g);
        }
        Ok((g, psum.value() - 1.0))
    }

    /// Fill `probs[k−1] = p_{n,k}` (k = 1..n−1), renormalized; returns the
    /// pre-renormalization residual. `weights` is scratch space.
    pub(crate) fn fill_jump_row(
        &self,
        n: usize,
        weights: &mut Vec<f64>,
        probs: &mut Vec<f64>,
    ) -> Result<f64> {
        if !(2..=self.n_max).contains(&n) {
            return Err(Error::Domain(format!(
                "jump_row requires 2 <= n <= n_max ({}), got {n}",
                self.n_max
            )));
        }
        let g = self.fill_weights(n, weights)?;
        probs.clear();
        probs.resize(n - 1, 0.0);
        // a blocks merge: n -> k = n - a + 1, i.e. probs index k-1 = n-a
        let mut psum = CompensatedSum::new();
        for (i, &w) in weights.iter().enumerate() {
            let a = i + 2;
            let p = w / g;
            probs[n - a] = p;
            psum.add(p);
        }
        let residual = psum.value() - 1.0;
        if !(residual.abs() < ROW_RESIDUAL_LIMIT) {
            return Err(Error::Domain(format!(
                "jump row {n} residual {residual:e} exceeds {ROW_RESIDUAL_LIMIT:e}"
            )));
        }
        // fold the residual into the largest entry so the row sums to exactly 1
        let mut imax = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[imax] {
                imax = i;
            }
        }
        probs[imax] -= residual;
        Ok(residual)
    }

    /// Jump row from n blocks: P(n → k) for k = 1..n−1.
    pub fn jump_row(&self, n: usize) -> Result<JumpRow> {
        let mut weights = Vec::new();
        let mut probs = Vec::new();
        let residual = self.fill_jump_row(n, &mut weights, &mut probs)?;
        Ok(JumpRow { probs, residual })
    }

    /// E[X₁⁽ⁿ⁾] = Σ_k p_{n,k}(n−k): mean block-count loss at the first jump,
    /// from the exact jump row.
    pub fn first_jump_decrement_mean(&self, n: usize) -> Result<f64> {
        let row = self.jump_row(n)?;
        let mut sum = CompensatedSum::new();
        for (i, &p) in row.probs.iter().enumerate() {
            let k = i + 1;
            sum.add(p * (n - k) as f64);
        }
        Ok(sum.value())
    }

    /// Cross-validation path for E[X₁⁽ⁿ⁾] through the tail-function integral
    /// ratio ∫₀¹(1−t)^(n−2)(∫ₜ¹ρ)dt / ∫₀¹(1−t)^(n−2)tρ(t)dt, evaluated by
    /// quadrature with the inner integral removed by Fubini.
    pub fn first_jump_decrement_mean_integral(&self, n: usize) -> Result<f64> {
        if n < 2 {
            return Err(Error::Domain(format!("requires n >= 2, got {n}")));
        }
        let alpha = self.measure.alpha();
        let nf = n as f64;
        let spec = QuadratureSpec {
            singularity_exponents: (1.0 - alpha, 0.0),
            rel_tol: 1e-11,
            ..*self.measure.quad_spec()
        };
        // numerator: ∫ ρ(r)(1−(1−r)^{n−1})/(n−1) dr, with 1−(1−r)^m = −expm1(m·ln1p(−r))
        let num = specfun::integrate_singular_plain(
            |r| {
                let one_minus_pow = -((nf - 1.0) * (-r).ln_1p()).exp_m1();
                self.measure.rho(r, 0).unwrap_or(f64::NAN) * one_minus_pow / (nf - 1.0)
            },
            &spec,
        )?;
        let spec = QuadratureSpec {
            singularity_exponents: (1.0 - alpha, (nf - 2.0).max(0.0)),
            rel_tol: 1e-11,
            ..*self.measure.quad_spec()
        };
        let den = specfun::integrate_singular_plain(
            |t| ((nf - 2.0) * (-t).ln_1p()).exp() * t * self.measure.rho(t, 0).unwrap_or(f64::NAN),
            &spec,
        )?;
        Ok(num / den)
    }

    /// Tilted falling-factorial sum
    /// S(n, l, r) = Σ_{k} p_{n,k} · (k−1)_l/(n)_l · (n/k)^r,
    /// defined for 1 ≤ l ≤ n−2 and 0 ≤ r < ω⁽ˡ⁾.
    pub fn tilted_factorial_sum(&self, n: usize, l: u32, r: f64) -> Result<f64> {
        if l < 1 || l as usize > n - 2 {
            return Err(Error::Domain(format!(
                "tilted_factorial_sum requires 1 <= l <= n-2, got l={l}, n={n}"
            )));
        }
        let omega = self.measure.omega(l)?;
        if !(0.0 <= r && r < omega) {
            return Err(Error::Domain(format!(
                "tilted_factorial_sum requires 0 <= r < omega({l}) = {omega}, got r={r}"
            )));
        }
        let row = self.jump_row(n)?;
        let nf = n as f64;
        let ln_n = nf.ln();
        let mut sum = CompensatedSum::new();
        for (i, &p) in row.probs.iter().enumerate() {
            let k = (i + 1) as u64;
            let ff = falling_factorial_ratio(k - 1, n as u64, l as u64)?;
            if ff == 0.0 {
                continue;
            }
            let scale = if r == 0.0 {
                1.0
            } else {
                (r * (ln_n - (k as f64).ln())).exp()
            };
            sum.add(p * ff * scale);
        }
        Ok(sum.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::CoalescentMeasure;

    fn beta15() -> CoalescentMeasure {
        CoalescentMeasure::beta(1.5).unwrap()
    }

    #[test]
    fn lambda_hand_values() {
        let m = beta15();
        assert!((lambda_rate(&m, 2, 2).unwrap() - 1.0).abs() < 1e-12);
        assert!((lambda_rate(&m, 3, 2).unwrap() - 0.75).abs() < 1e-12);
        assert!((lambda_rate(&m, 3, 3).unwrap() - 0.25).abs() < 1e-12);
        // frozen oracle values
        assert!((lambda_rate(&m, 5, 3).unwrap() - 0.078125).abs() < 1e-12);
        assert!((lambda_rate(&m, 10, 4).unwrap() - 0.004364013671875).abs() < 1e-14);
        // lambda_{2,2} = 1 for any alpha: Lambda is a probability measure
        for &al in &[1.25, 1.75] {
            let m = CoalescentMeasure::beta(al).unwrap();
            assert!((lambda_rate(&m, 2, 2).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_domain_errors() {
        let m = beta15();
        assert!(lambda_rate(&m, 3, 1).is_err());
        assert!(lambda_rate(&m, 3, 4).is_err());
    }

    #[test]
    fn lambda_general_matches_closed_form() {
        let g = CoalescentMeasure::beta_as_general(1.5).unwrap();
        let m = beta15();
        for b in 2..=12u32 {
            for a in 2..=b {
                let lq = lambda_rate(&g, b, a).unwrap();
                let lc = lambda_rate(&m, b, a).unwrap();
                assert!(
                    ((lq - lc) / lc).abs() < 1e-9,
                    "lambda({b},{a}): quad {lq} vs closed {lc}"
                );
            }
        }
    }

    #[test]
    fn pitman_consistency() {
        // lambda_{b,a} = lambda_{b+1,a} + lambda_{b+1,a+1}
        let m = beta15();
        for b in 2..=100u32 {
            for a in 2..=b {
                let lhs = lambda_rate(&m, b, a).unwrap();
                let rhs = lambda_rate(&m, b + 1, a).unwrap() + lambda_rate(&m, b + 1, a + 1).unwrap();
                assert!(
                    ((lhs - rhs) / lhs).abs() < 1e-11,
                    "consistency at ({b},{a}): {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn total_rate_hand_values() {
        let m = beta15();
        assert!((total_rate(&m, 2, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!((total_rate(&m, 3, 0).unwrap() - 2.5).abs() < 1e-12);
        // frozen: g_10 at alpha = 1.5
        assert!((total_rate(&m, 10, 0).unwrap() - 21.143646240234375).abs() < 1e-10);
        // g_2 = 1 for any normalized measure
        let m = CoalescentMeasure::beta(1.25).unwrap();
        assert!((total_rate(&m, 2, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_matches_total_rate_and_grows() {
        let m = beta15();
        let t = RateTable::build(&m, 512).unwrap();
        for b in [2usize, 3, 17, 100, 512] {
            let direct = total_rate(&m, b as u32, 0).unwrap();
            assert!(
                ((t.g(b) - direct) / direct).abs() < 1e-12,
                "g({b}): table {} vs direct {direct}",
                t.g(b)
            );
        }
        for b in 2..512 {
            assert!(t.g(b + 1) > t.g(b), "g not increasing at {b}");
        }
        assert!(t.max_row_residual() < 1e-12);
    }

    #[test]
    fn jump_rows_normalize() {
        let m = beta15();
        let t = RateTable::build(&m, 256).unwrap();
        let row = t.jump_row(2).unwrap();
        assert_eq!(row.probs.len(), 1);
        assert!((row.probs[0] - 1.0).abs() < 1e-15);

        let row = t.jump_row(3).unwrap();
        assert!((row.probs[0] - 0.1).abs() < 1e-12, "p_31 = {}", row.probs[0]);
        assert!((row.probs[1] - 0.9).abs() < 1e-12, "p_32 = {}", row.probs[1]);

        for n in 2..=256usize {
            let row = t.jump_row(n).unwrap();
            assert!(row.residual.abs() < 1e-12, "residual at {n}");
            let sum: f64 = row.probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-14, "post-renorm sum at {n}: {sum}");
            assert!(row.probs.iter().all(|&p| p >= 0.0));
        }
        assert!(t.jump_row(257).is_err());
        assert!(t.jump_row(1).is_err());
    }

    #[test]
    fn first_jump_decrement() {
        let m = beta15();
        let t = RateTable::build(&m, 4096).unwrap();
        assert!((t.first_jump_decrement_mean(2).unwrap() - 1.0).abs() < 1e-14);
        assert!((t.first_jump_decrement_mean(3).unwrap() - 1.1).abs() < 1e-12);
        // E[X1] -> 1/(alpha-1) = 2; within 5% by n = 2^12
        let v = t.first_jump_decrement_mean(4096).unwrap();
        assert!((v - 2.0).abs() / 2.0 < 0.05, "E[X1](4096) = {v}");
    }

    #[test]
    fn first_jump_decrement_integral_cross_check() {
        let m = beta15();
        let t = RateTable::build(&m, 64).unwrap();
        for n in [5usize, 10, 50] {
            let exact = t.first_jump_decrement_mean(n).unwrap();
            let integral = t.first_jump_decrement_mean_integral(n).unwrap();
            assert!(
                ((exact - integral) / exact).abs() < 1e-8,
                "n={n}: row {exact} vs integral {integral}"
            );
        }
    }

    #[test]
    fn tilted_sum_hand_value_and_domain() {
        let m = beta15();
        let t = RateTable::build(&m, 64).unwrap();
        // S(3,1,0) = p_{3,2} * (1)_1/(3)_1 = 0.9/3
        let s = t.tilted_factorial_sum(3, 1, 0.0).unwrap();
        assert!((s - 0.3).abs() < 1e-12, "S(3,1,0) = {s}");
        // r >= omega(l) = alpha + l rejected
        assert!(t.tilted_factorial_sum(10, 1, 2.5).is_err());
        assert!(t.tilted_factorial_sum(10, 1, 2.49).is_ok());
        assert!(t.tilted_factorial_sum(10, 0, 0.0).is_err());
        assert!(t.tilted_factorial_sum(3, 2, 0.0).is_err());
    }

    #[test]
    fn tilting_identity_small() {
        // S(n,l,0) * g_n = g^{(l)}_{n-l}, exactly (within 1e-11 relative)
        let m = beta15();
        let t = RateTable::build(&m, 64).unwrap();
        for n in [10usize, 32, 64] {
            for l in 1..=2u32 {
                let s = t.tilted_factorial_sum(n, l, 0.0).unwrap();
                let lhs = s * t.g(n);
                let rhs = total_rate(&m, (n as u32) - l, l).unwrap();
                assert!(
                    ((lhs - rhs) / rhs).abs() < 1e-11,
                    "n={n} l={l}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn general_table_small() {
        let g = CoalescentMeasure::beta_as_general(1.5).unwrap();
        let tg = RateTable::build(&g, 12).unwrap();
        let m = beta15();
        let tm = RateTable::build(&m, 12).unwrap();
        for n in 2..=12usize {
            assert!(((tg.g(n) - tm.g(n)) / tm.g(n)).abs() < 1e-8);
        }
        let rg = tg.jump_row(7).unwrap();
        let rm = tm.jump_row(7).unwrap();
        for k in 0..6 {
            assert!((rg.probs[k] - rm.probs[k]).abs() < 1e-9);
        }
    }
}
