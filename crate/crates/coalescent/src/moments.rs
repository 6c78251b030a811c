//! Exact dynamic-programming solver for the external-branch moment
//! recurrences.
//!
//! Writing e₀ for the first holding time and H_{n,k} for the event that the
//! first collision takes n blocks to k without touching leaf 1
//! (P(H_{n,k}) = p_{n,k}(k−1)/n), the branch length decomposes as
//! T₁⁽ⁿ⁾ = e₀/g_n + Σ_k 1_{H_{n,k}} T̄₁⁽ᵏ⁾ with the three factors
//! independent. The first moment satisfies
//!   E[T₁⁽ⁿ⁾] = 1/g_n + Σ_k p_{n,k}·((k−1)/n)·E[T₁⁽ᵏ⁾],
//! the m-th moment follows by the binomial expansion of the two independent
//! summands (the events H_{n,k} are disjoint, so cross terms in powers of the
//! sum vanish), and the pairwise product satisfies
//!   E[T₁⁽ⁿ⁾T₂⁽ⁿ⁾] = 2E[T₁⁽ⁿ⁾]/g_n + Σ_k p_{n,k}·((k−1)₂/(n)₂)·E[T₁⁽ᵏ⁾T₂⁽ᵏ⁾].
//!
//! The higher-moment expansion is validated against the Monte Carlo oracle
//! (simulator module) before any large-n use; see the acceptance suite.
//!
//! The solver makes a single forward pass n = 2..n_max, streaming each jump
//! row once and never retaining it: O(n²) time, O(n) memory. All inner sums
//! use compensated accumulation and the pass is strictly sequential, so
//! tables are bitwise reproducible.

use crate::asymptotics::LimitLaw;
use crate::measure::CoalescentMeasure;
use crate::numeric::CompensatedSum;
use crate::rates::RateTable;
use crate::{Error, Result};

/// Exact moments E[(T₁⁽ⁿ⁾)^m] for m = 1..=orders and E[T₁⁽ⁿ⁾T₂⁽ⁿ⁾], per n.
#[derive(Clone, Debug)]
pub struct MomentTable {
    measure: CoalescentMeasure,
    n_max: usize,
    orders: usize,
    /// mt[m−1][n] = E[(T₁⁽ⁿ⁾)^m]; time^m units; valid n = 2..=n_max.
    mt: Vec<Vec<f64>>,
    /// mtt[n] = E[T₁⁽ⁿ⁾T₂⁽ⁿ⁾]; time² units.
    mtt: Vec<f64>,
    /// g[n], copied from the rate table for reporting.
    g: Vec<f64>,
}

impl MomentTable {
    /// Solve the recurrences up to `rates.n_max()` for moments 1..=orders.
    /// The pair moment needs E[(T₁)²] for its own consumers downstream, so
    /// `orders` is clamped below at 2.
    pub fn solve(rates: &RateTable, orders: usize) -> Result<Self> {
        if orders < 1 {
            return Err(Error::Domain("orders must be >= 1".into()));
        }
        let orders = orders.max(2);
        let n_max = rates.n_max();
        let mut mt = vec![vec![0.0f64; n_max + 1]; orders];
        let mut mtt = vec![0.0f64; n_max + 1];
        let mut g = vec![f64::NAN; n_max + 1];
        // factorials m! for m <= orders
        let mut fact = vec![1.0f64; orders + 1];
        for m in 1..=orders {
            fact[m] = fact[m - 1] * m as f64;
        }
        let mut weights = Vec::new();
        let mut probs = Vec::new();
        for n in 2..=n_max {
            rates.fill_jump_row(n, &mut weights, &mut probs)?;
            let gn = rates.g(n);
            g[n] = gn;
            let nf = n as f64;
            // stream the row once: S_q = sum_k p_{n,k} (k-1)/n mt[q][k],
            // STT = sum_k p_{n,k} (k-1)(k-2)/(n(n-1)) mtt[k]
            let mut s = vec![CompensatedSum::new(); orders];
            let mut stt = CompensatedSum::new();
            for (i, &p) in probs.iter().enumerate() {
                let k = i + 1;
                if k < 2 {
                    continue;
                }
                let w1 = p * (k - 1) as f64 / nf;
                for (q, sq) in s.iter_mut().enumerate() {
                    sq.add(w1 * mt[q][k]);
                }
                if k >= 3 {
                    let w2 = p * ((k - 1) * (k - 2)) as f64 / (nf * (nf - 1.0));
                    stt.add(w2 * mtt[k]);
                }
            }
            // mt[m][n] = m!/g^m + sum_{q=1}^{m} m!/q! g^{-(m-q)} S_q
            for m in 1..=orders {
                let mut acc = CompensatedSum::new();
                acc.add(fact[m] / gn.powi(m as i32));
                for q in 1..=m {
                    acc.add(fact[m] / fact[q] * gn.powi(-((m - q) as i32)) * s[q - 1].value());
                }
                mt[m - 1][n] = acc.value();
            }
            mtt[n] = 2.0 * mt[0][n] / gn + stt.value();
        }
        Ok(Self {
            measure: rates.measure().clone(),
            n_max,
            orders,
            mt,
            mtt,
            g,
        })
    }

    pub fn measure(&self) -> &CoalescentMeasure {
        &self.measure
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn orders(&self) -> usize {
        self.orders
    }

    pub fn g(&self, n: usize) -> f64 {
        self.g[n]
    }

    /// E[(T₁⁽ⁿ⁾)^m], 1 ≤ m ≤ orders.
    pub fn moment(&self, m: usize, n: usize) -> f64 {
        self.mt[m - 1][n]
    }

    /// E[T₁⁽ⁿ⁾].
    pub fn first(&self, n: usize) -> f64 {
        self.mt[0][n]
    }

    /// E[T₁⁽ⁿ⁾T₂⁽ⁿ⁾].
    pub fn pair(&self, n: usize) -> f64 {
        self.mtt[n]
    }

    /// Var(T₁⁽ⁿ⁾).
    pub fn variance(&self, n: usize) -> f64 {
        self.mt[1][n] - self.mt[0][n] * self.mt[0][n]
    }

    /// Cov(T₁⁽ⁿ⁾, T₂⁽ⁿ⁾).
    pub fn covariance(&self, n: usize) -> f64 {
        self.mtt[n] - self.mt[0][n] * self.mt[0][n]
    }

    /// E[(L_ext⁽ⁿ⁾ − n^(2−α)·E[T])²], expanded exactly as
    /// n·E[T₁²] + n(n−1)·E[T₁T₂] − 2n^(3−α)E[T]·E[T₁] + n^(4−2α)E[T]²
    /// with E[T] the limit-law constant. No pairwise-vs-ordered bookkeeping
    /// enters: the square is expanded directly.
    pub fn lext_mse(&self, expected_t: f64, n: usize) -> f64 {
        let a = self.measure.alpha();
        let nf = n as f64;
        nf * self.mt[1][n] + nf * (nf - 1.0) * self.mtt[n]
            - 2.0 * nf.powf(3.0 - a) * expected_t * self.mt[0][n]
            + nf.powf(4.0 - 2.0 * a) * expected_t * expected_t
    }

    /// n^(α−1)·E[T₁⁽ⁿ⁾], the rescaling that converges to E[T].
    pub fn rescaled_first(&self, n: usize) -> f64 {
        (n as f64).powf(self.measure.alpha() - 1.0) * self.first(n)
    }

    /// n^(3(α−1))·Cov(T₁⁽ⁿ⁾,T₂⁽ⁿ⁾), the rescaling that converges to Δ(α).
    pub fn rescaled_covariance(&self, n: usize) -> f64 {
        (n as f64).powf(3.0 * (self.measure.alpha() - 1.0)) * self.covariance(n)
    }

    /// n^(3α−5)·lext_mse(n).
    pub fn rescaled_mse(&self, law: &LimitLaw, n: usize) -> f64 {
        (n as f64).powf(3.0 * self.measure.alpha() - 5.0) * self.lext_mse(law.expected_value(), n)
    }
}
