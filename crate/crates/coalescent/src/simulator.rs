//! Monte Carlo engine for the continuous-time n-coalescent.
//!
//! Block identity is never tracked beyond which original leaves are still
//! singletons: every functional in scope (external lengths, total length,
//! collision count) is a function of holding times, merger sizes, and which
//! singletons each merger absorbs. A merger of a blocks among b hits
//! singletons hypergeometrically, and the absorbed leaves are a uniform
//! subset of the surviving ones, so a replicate costs O(τ·(n+a)) instead of
//! full partition bookkeeping.
//!
//! Replicate r draws from a ChaCha stream keyed by (master_seed, r), so
//! results are independent of scheduling and worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::sync::OnceLock;

use crate::measure::{CoalescentMeasure, MeasureKind};
use crate::numeric::CompensatedSum;
use crate::rates::RateTable;
use crate::{Error, Result};

/// Merger-size tables switch from inverse-CDF to alias sampling above this
/// block count.
const ALIAS_THRESHOLD: usize = 64;

/// Sampling table for the merger-size law at a fixed block count b:
/// P(a) = C(b,a)λ_{b,a}/g_b over a = 2..=b (stored at index a−2).
#[derive(Clone, Debug)]
enum MergerTable {
    /// cumulative probabilities; sampled by binary search
    InverseCdf(Vec<f64>),
    /// Vose alias table; sampled in O(1)
    Alias { prob: Vec<f64>, alias: Vec<u32> },
}

impl MergerTable {
    fn from_probs(probs: &[f64]) -> Self {
        let m = probs.len();
        if m <= ALIAS_THRESHOLD {
            let mut cum = Vec::with_capacity(m);
            let mut acc = CompensatedSum::new();
            for &p in probs {
                acc.add(p);
                cum.push(acc.value());
            }
            if let Some(last) = cum.last_mut() {
                *last = 1.0;
            }
            MergerTable::InverseCdf(cum)
        } else {
            // Vose alias construction
            let mut prob = vec![0.0f64; m];
            let mut alias = vec![0u32; m];
            let mut small = Vec::with_capacity(m);
            let mut large = Vec::with_capacity(m);
            let mut scaled: Vec<f64> = probs.iter().map(|&p| p * m as f64).collect();
            for (i, &s) in scaled.iter().enumerate() {
                if s < 1.0 {
                    small.push(i);
                } else {
                    large.push(i);
                }
            }
            while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
                small.pop();
                prob[s] = scaled[s];
                alias[s] = l as u32;
                scaled[l] = (scaled[l] + scaled[s]) - 1.0;
                if scaled[l] < 1.0 {
                    large.pop();
                    small.push(l);
                }
            }
            for &i in small.iter().chain(large.iter()) {
                prob[i] = 1.0;
            }
            MergerTable::Alias { prob, alias }
        }
    }

    #[inline]
    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        match self {
            MergerTable::InverseCdf(cum) => {
                let u: f64 = rng.gen();
                cum.partition_point(|&c| c <= u)
            }
            MergerTable::Alias { prob, alias } => {
                let m = prob.len();
                let i = rng.gen_range(0..m);
                let u: f64 = rng.gen();
                if u < prob[i] {
                    i
                } else {
                    alias[i] as usize
                }
            }
        }
    }
}

/// Read-only simulation context for one (measure, n): total rates plus
/// per-block-count merger-size tables, shared across workers. Beta tables are
/// built lazily on first use of each block count; general-measure tables are
/// built eagerly because their rows need quadrature.
pub struct SimContext {
    rates: RateTable,
    n: usize,
    merger: Vec<OnceLock<MergerTable>>,
}

impl SimContext {
    pub fn new(measure: &CoalescentMeasure, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("simulation requires n >= 2, got {n}")));
        }
        let rates = RateTable::build(measure, n)?;
        let merger: Vec<OnceLock<MergerTable>> = (0..=n).map(|_| OnceLock::new()).collect();
        let ctx = Self { rates, n, merger };
        if matches!(measure.kind(), MeasureKind::General(_)) {
            for b in 2..=n {
                ctx.table(b)?;
            }
        }
        Ok(ctx)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rates(&self) -> &RateTable {
        &self.rates
    }

    fn table(&self, b: usize) -> Result<&MergerTable> {
        if !(2..=self.n).contains(&b) {
            return Err(Error::Domain(format!("block count {b} outside 2..={}", self.n)));
        }
        if let Some(t) = self.merger[b].get() {
            return Ok(t);
        }
        // jump row index k-1 <-> merger size a = b-k+1; re-index by a
        let row = self.rates.jump_row(b)?;
        let mut probs = vec![0.0f64; b - 1];
        for (i, &p) in row.probs.iter().enumerate() {
            let k = i + 1;
            probs[b - k - 1] = p; // a = b-k+1, index a-2 = b-k-1
        }
        let _ = self.merger[b].set(MergerTable::from_probs(&probs));
        Ok(self.merger[b].get().expect("just set"))
    }
}

/// Draw a merger size a ∈ {2..b} with probability C(b,a)λ_{b,a}/g_b.
pub fn sample_merger_size<R: Rng>(ctx: &SimContext, b: usize, rng: &mut R) -> Result<usize> {
    Ok(ctx.table(b)?.sample(rng) + 2)
}

/// Mutable state of one replicate.
pub struct CoalescentState {
    pub block_count: usize,
    /// still-external flag per original leaf
    pub singleton_flags: Vec<bool>,
    pub elapsed_time: f64,
    pub collisions_so_far: u32,
    /// indices of leaves whose singleton blocks survive (uniform-selection pool)
    alive: Vec<u32>,
}

impl CoalescentState {
    fn new(n: usize) -> Self {
        Self {
            block_count: n,
            singleton_flags: vec![true; n],
            elapsed_time: 0.0,
            collisions_so_far: 0,
            alive: (0..n as u32).collect(),
        }
    }
}

/// Functionals of one simulated tree.
#[derive(Clone, Debug)]
pub struct SimulationSample {
    /// T_i per original leaf
    pub external_lengths: Vec<f64>,
    pub l_ext: f64,
    pub l_total: f64,
    /// number of collisions to the most recent common ancestor
    pub tau: u32,
}

/// Simulate one n-coalescent tree.
pub fn simulate_tree<R: Rng>(ctx: &SimContext, rng: &mut R) -> Result<SimulationSample> {
    let n = ctx.n;
    let mut st = CoalescentState::new(n);
    let mut t_ext = vec![0.0f64; n];
    let mut l_total = 0.0f64;
    while st.block_count > 1 {
        let b = st.block_count;
        let g = ctx.rates.g(b);
        let u: f64 = rng.gen();
        let holding = -(1.0 - u).ln() / g;
        st.elapsed_time += holding;
        l_total += b as f64 * holding;
        let a = sample_merger_size(ctx, b, rng)?;
        st.collisions_so_far += 1;
        // hypergeometric draw of singletons among the a merged blocks,
        // as a sequential urn walk
        let s = st.alive.len();
        let mut hits = 0usize;
        for i in 0..a {
            let remaining_blocks = b - i;
            let remaining_singles = s - hits;
            if remaining_singles == 0 {
                break;
            }
            let u: f64 = rng.gen();
            if u * (remaining_blocks as f64) < remaining_singles as f64 {
                hits += 1;
            }
        }
        // absorb a uniform subset of `hits` surviving leaves
        for _ in 0..hits {
            let j = rng.gen_range(0..st.alive.len());
            let leaf = st.alive.swap_remove(j) as usize;
            st.singleton_flags[leaf] = false;
            t_ext[leaf] = st.elapsed_time;
        }
        st.block_count = b - a + 1;
    }
    debug_assert!(st.alive.is_empty(), "final merger absorbs every singleton");
    let l_ext: f64 = t_ext.iter().sum();
    Ok(SimulationSample {
        external_lengths: t_ext,
        l_ext,
        l_total,
        tau: st.collisions_so_far,
    })
}

/// Mean, population variance, and standard error of one functional across
/// replicates.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct FunctionalStats {
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

fn stats(values: &[f64]) -> FunctionalStats {
    let n = values.len() as f64;
    let mut sum = CompensatedSum::new();
    for &v in values {
        sum.add(v);
    }
    let mean = sum.value() / n;
    let mut ss = CompensatedSum::new();
    for &v in values {
        let d = v - mean;
        ss.add(d * d);
    }
    let variance = if values.len() > 1 {
        ss.value() / (n - 1.0)
    } else {
        0.0
    };
    FunctionalStats {
        mean,
        variance,
        std_error: (variance / n).sqrt(),
    }
}

/// Aggregated estimators over N replicates. Bitwise identical for a fixed
/// (measure, n, replicates, master_seed) regardless of worker count.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SimulationSummary {
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    /// T₁ (a fixed leaf; exchangeability makes the choice immaterial)
    pub external_first: FunctionalStats,
    /// T₁²
    pub external_first_sq: FunctionalStats,
    /// T₁·T₂
    pub external_pair_product: FunctionalStats,
    pub l_ext: FunctionalStats,
    pub l_total: FunctionalStats,
    pub tau: FunctionalStats,
    /// per-replicate L_ext/L_total (reported, never asserted against a constant)
    pub external_ratio: FunctionalStats,
    /// n^(α−1)·T for a uniformly chosen external branch per replicate;
    /// empirical-CDF material for the limit-law check
    pub rescaled_external_samples: Vec<f64>,
}

/// Per-replicate reduced record (kept small so large N stays cheap).
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    /// T of the first leaf
    pub t1: f64,
    /// T of the second leaf
    pub t2: f64,
    pub l_ext: f64,
    pub l_total: f64,
    pub tau: u32,
    /// T of a uniformly chosen leaf
    pub t_random: f64,
}

fn replicate_rng(master_seed: u64, replicate: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate);
    rng
}

fn run_one(ctx: &SimContext, master_seed: u64, replicate: u64) -> Result<ReplicateRecord> {
    let mut rng = replicate_rng(master_seed, replicate);
    let sample = simulate_tree(ctx, &mut rng)?;
    let pick = rng.gen_range(0..ctx.n());
    Ok(ReplicateRecord {
        replicate,
        t1: sample.external_lengths[0],
        t2: sample.external_lengths[1],
        l_ext: sample.l_ext,
        l_total: sample.l_total,
        tau: sample.tau,
        t_random: sample.external_lengths[pick],
    })
}

/// Run `replicates` independent trees and return the per-replicate records
/// in replicate order (deterministic for any worker count).
pub fn run_replicates(
    measure: &CoalescentMeasure,
    n: usize,
    replicates: usize,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<ReplicateRecord>> {
    if replicates < 1 {
        return Err(Error::Domain("replicates must be >= 1".into()));
    }
    if workers < 1 {
        return Err(Error::Domain("workers must be >= 1".into()));
    }
    let ctx = SimContext::new(measure, n)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..replicates as u64)
            .into_par_iter()
            .map(|r| run_one(&ctx, master_seed, r))
            .collect()
    })
}

/// Reduce per-replicate records into a [`SimulationSummary`].
pub fn summarize(
    measure: &CoalescentMeasure,
    n: usize,
    master_seed: u64,
    results: &[ReplicateRecord],
) -> SimulationSummary {
    let alpha = measure.alpha();
    let rescale = (n as f64).powf(alpha - 1.0);
    let col = |f: &dyn Fn(&ReplicateRecord) -> f64| -> Vec<f64> {
        results.iter().map(f).collect()
    };
    let t1 = col(&|r| r.t1);
    let t1_sq = col(&|r| r.t1 * r.t1);
    let pair = col(&|r| r.t1 * r.t2);
    let l_ext = col(&|r| r.l_ext);
    let l_total = col(&|r| r.l_total);
    let tau = col(&|r| r.tau as f64);
    let ratio = col(&|r| r.l_ext / r.l_total);
    let rescaled: Vec<f64> = results.iter().map(|r| rescale * r.t_random).collect();
    SimulationSummary {
        n,
        replicates: results.len(),
        master_seed,
        external_first: stats(&t1),
        external_first_sq: stats(&t1_sq),
        external_pair_product: stats(&pair),
        l_ext: stats(&l_ext),
        l_total: stats(&l_total),
        tau: stats(&tau),
        external_ratio: stats(&ratio),
        rescaled_external_samples: rescaled,
    }
}

/// Run `replicates` independent trees on `workers` threads and reduce in
/// replicate order.
pub fn run_experiment(
    measure: &CoalescentMeasure,
    n: usize,
    replicates: usize,
    master_seed: u64,
    workers: usize,
) -> Result<SimulationSummary> {
    let results = run_replicates(measure, n, replicates, master_seed, workers)?;
    Ok(summarize(measure, n, master_seed, &results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::MomentTable;

    fn ctx(alpha: f64, n: usize) -> SimContext {
        let m = CoalescentMeasure::beta(alpha).unwrap();
        SimContext::new(&m, n).unwrap()
    }

    #[test]
    fn n2_forced_path() {
        let c = ctx(1.5, 2);
        let mut rng = replicate_rng(7, 0);
        let s = simulate_tree(&c, &mut rng).unwrap();
        assert_eq!(s.tau, 1);
        assert_eq!(s.external_lengths[0], s.external_lengths[1]);
        assert_eq!(s.l_ext, 2.0 * s.external_lengths[0]);
        assert!((s.l_total - s.l_ext).abs() < 1e-15);
    }

    #[test]
    fn per_sample_invariants() {
        let c = ctx(1.5, 30);
        for rep in 0..1000u64 {
            let mut rng = replicate_rng(42, rep);
            let s = simulate_tree(&c, &mut rng).unwrap();
            assert!(s.l_ext <= s.l_total * (1.0 + 1e-12));
            assert!(s.tau >= 1 && s.tau <= 29);
            assert!(s.external_lengths.iter().all(|&t| t > 0.0));
            let sum: f64 = s.external_lengths.iter().sum();
            assert_eq!(sum, s.l_ext, "same accumulation");
            let ratio = s.l_ext / s.l_total;
            assert!(ratio > 0.0 && ratio < 1.0);
        }
    }

    #[test]
    fn merger_size_b3_frequencies() {
        // P(a=2) = 0.9, P(a=3) = 0.1 at alpha = 1.5
        let c = ctx(1.5, 3);
        let mut rng = replicate_rng(1, 0);
        let draws = 100_000;
        let mut n2 = 0u32;
        for _ in 0..draws {
            if sample_merger_size(&c, 3, &mut rng).unwrap() == 2 {
                n2 += 1;
            }
        }
        let p = n2 as f64 / draws as f64;
        let se = (0.9f64 * 0.1 / draws as f64).sqrt();
        assert!((p - 0.9).abs() < 4.0 * se, "p = {p}");
    }

    #[test]
    fn alias_table_matches_exact_row() {
        // b above the alias threshold: frequencies within 5 SE of the row
        let c = ctx(1.5, 100);
        let row = c.rates().jump_row(100).unwrap();
        let mut rng = replicate_rng(3, 0);
        let draws = 400_000usize;
        let mut counts = vec![0u32; 99];
        for _ in 0..draws {
            let a = sample_merger_size(&c, 100, &mut rng).unwrap();
            counts[a - 2] += 1;
        }
        for (i, &c_i) in counts.iter().enumerate() {
            let a = i + 2;
            let k = 100 - a + 1;
            let p = row.probs[k - 1];
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let diff = (c_i as f64 / draws as f64 - p).abs();
            assert!(
                diff <= 5.0 * se + 2.0 / draws as f64,
                "a={a}: freq {} vs p {p}",
                c_i as f64 / draws as f64
            );
        }
    }

    #[test]
    fn determinism_across_worker_counts() {
        let m = CoalescentMeasure::beta(1.5).unwrap();
        let s1 = run_experiment(&m, 40, 2000, 99, 1).unwrap();
        let s4 = run_experiment(&m, 40, 2000, 99, 4).unwrap();
        assert_eq!(s1.external_first.mean.to_bits(), s4.external_first.mean.to_bits());
        assert_eq!(s1.l_ext.variance.to_bits(), s4.l_ext.variance.to_bits());
        assert_eq!(s1.rescaled_external_samples, s4.rescaled_external_samples);
    }

    #[test]
    fn single_replicate_matches_stream_zero() {
        let m = CoalescentMeasure::beta(1.5).unwrap();
        let s = run_experiment(&m, 10, 1, 1234, 1).unwrap();
        let c = SimContext::new(&m, 10).unwrap();
        let r = run_one(&c, 1234, 0).unwrap();
        assert_eq!(s.external_first.mean.to_bits(), r.t1.to_bits());
        assert_eq!(s.l_ext.mean.to_bits(), r.l_ext.to_bits());
    }

    #[test]
    fn mc_gate_against_recurrences_n6() {
        // the Monte Carlo oracle gate for the moment recurrences, small-n fast version
        let m = CoalescentMeasure::beta(1.5).unwrap();
        let rt = RateTable::build(&m, 6).unwrap();
        let mt = MomentTable::solve(&rt, 2).unwrap();
        let s = run_experiment(&m, 6, 60_000, 2024, 2).unwrap();
        let checks = [
            (s.external_first, mt.first(6)),
            (s.external_first_sq, mt.moment(2, 6)),
            (s.external_pair_product, mt.pair(6)),
            (s.l_ext, 6.0 * mt.first(6)),
        ];
        for (got, want) in checks {
            assert!(
                (got.mean - want).abs() < 4.0 * got.std_error,
                "MC {} vs exact {want} (SE {})",
                got.mean,
                got.std_error
            );
        }
    }

    #[test]
    fn exchangeability_t1_t2() {
        let m = CoalescentMeasure::beta(1.5).unwrap();
        let c = SimContext::new(&m, 50).unwrap();
        let n_rep = 20_000u64;
        let (mut m1, mut m2, mut v1, mut v2) = (0.0, 0.0, 0.0, 0.0);
        let mut vals = Vec::with_capacity(n_rep as usize);
        for rep in 0..n_rep {
            let r = run_one(&c, 5, rep).unwrap();
            vals.push((r.t1, r.t2));
        }
        let nf = n_rep as f64;
        for &(a, b) in &vals {
            m1 += a / nf;
            m2 += b / nf;
        }
        for &(a, b) in &vals {
            v1 += (a - m1) * (a - m1) / (nf - 1.0);
            v2 += (b - m2) * (b - m2) / (nf - 1.0);
        }
        let se = ((v1 + v2) / nf).sqrt();
        assert!((m1 - m2).abs() < 4.0 * se, "T1 mean {m1} vs T2 mean {m2}");
    }

    #[test]
    fn general_measure_simulation_matches_recurrence() {
        // quadrature-backed rates drive the simulator; oracle = exact recurrence
        let m = CoalescentMeasure::power_law(1.5).unwrap();
        let s = run_experiment(&m, 8, 20_000, 11, 2).unwrap();
        let rt = RateTable::build(&m, 8).unwrap();
        let mt = MomentTable::solve(&rt, 2).unwrap();
        assert!(
            (s.external_first.mean - mt.first(8)).abs() < 4.0 * s.external_first.std_error,
            "MC {} vs exact {}",
            s.external_first.mean,
            mt.first(8)
        );
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let m = CoalescentMeasure::beta(1.5).unwrap();
        assert!(SimContext::new(&m, 1).is_err());
        assert!(run_experiment(&m, 5, 0, 1, 1).is_err());
        assert!(run_experiment(&m, 5, 1, 1, 0).is_err());
    }
}
