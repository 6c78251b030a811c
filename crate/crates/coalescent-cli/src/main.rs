//! Command-line interface: exact rate/moment tables, limit-law constants,
//! Monte Carlo simulation, and the verification checklist.
//!
//! Exit codes: 0 success, 1 verification criterion failure, 2 usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use coalescent::asymptotics::{
    self, beta_constants, delta_alpha, delta_alpha_integral, theorem_prediction, LimitLaw,
    TheoremId,
};
use coalescent::measure::{CaseId, CoalescentMeasure, MeasureConfig};
use coalescent::moments::MomentTable;
use coalescent::rates::RateTable;
use coalescent::simulator::{run_replicates, summarize};
use coalescent::verify::{run_verification, CheckStatus, VerifyConfig};

#[derive(Parser)]
#[command(name = "coalescent", version, about = "Multiple-merger coalescent numerics: rates, external-branch moments, limit constants, simulation, verification")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Emit total rates, first-jump decrement means, and row entropies as CSV
    Rates(RatesArgs),
    /// Solve the exact moment recurrences and emit the table as CSV
    Moments(MomentsArgs),
    /// Print the limit-law constants and prediction records as JSON
    Asymptotics(AsymptoticsArgs),
    /// Run the Monte Carlo simulator and emit summary (and optional raw) CSV
    Simulate(SimulateArgs),
    /// Run the verification checklist and emit a JSON report
    Verify(VerifyArgs),
}

/// JSON run configuration accepted by every subcommand through --config.
/// Command-line flags override config values.
#[derive(Clone, Debug, Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    measure: Option<MeasureConfig>,
    n_max: Option<usize>,
    orders: Option<usize>,
    replicates: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    raw_out: Option<PathBuf>,
    row: Option<usize>,
    verify: Option<VerifyConfig>,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Beta-family parameter in (1, 2)
    #[arg(long)]
    alpha: Option<f64>,
    /// Allow alpha outside the stable range [1.05, 1.95]
    #[arg(long)]
    allow_extreme_alpha: bool,
    /// JSON run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig> {
        let Some(path) = &self.config else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    fn measure(&self, cfg: &RunConfig) -> Result<CoalescentMeasure> {
        let mc = match (self.alpha, &cfg.measure) {
            (Some(alpha), _) => MeasureConfig::Beta {
                alpha,
                allow_extreme_alpha: self.allow_extreme_alpha,
            },
            (None, Some(mc)) => mc.clone(),
            (None, None) => MeasureConfig::Beta {
                alpha: 1.5,
                allow_extreme_alpha: false,
            },
        };
        Ok(CoalescentMeasure::from_config(&mc)?)
    }

    fn out(&self, cfg: &RunConfig) -> Option<PathBuf> {
        self.out.clone().or_else(|| cfg.out.clone())
    }
}

fn resolve_workers(flag: Option<usize>, cfg: &RunConfig) -> usize {
    flag.or_else(|| {
        std::env::var("COALESCENT_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .or(cfg.workers)
    .unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|p| p.get())
            .unwrap_or(1)
    })
    .max(1)
}

fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => {
            fs::write(p, content).with_context(|| format!("writing {}", p.display()))?;
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

#[derive(Args)]
struct RatesArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Largest block count in the table
    #[arg(long)]
    nmax: Option<usize>,
    /// Dump one jump row (probabilities of n -> k) instead of the table
    #[arg(long)]
    row: Option<usize>,
}

fn cmd_rates(args: &RatesArgs) -> Result<()> {
    let cfg = args.common.load()?;
    let measure = args.common.measure(&cfg)?;
    let n_max = args.nmax.or(cfg.n_max).unwrap_or(128);
    let table = RateTable::build(&measure, n_max)?;
    let mut out = String::new();
    if let Some(n) = args.row.or(cfg.row) {
        let row = table.jump_row(n)?;
        out.push_str("k,p\n");
        for (i, &p) in row.probs.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, p));
        }
    } else {
        out.push_str("n,g_n,E_X1,row_entropy\n");
        for n in 2..=n_max {
            let row = table.jump_row(n)?;
            let ex1 = table.first_jump_decrement_mean(n)?;
            let entropy: f64 = 0.0
                - row
                    .probs
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| p * p.ln())
                    .sum::<f64>();
            out.push_str(&format!("{},{},{},{}\n", n, table.g(n), ex1, entropy));
        }
    }
    write_output(args.common.out(&cfg).as_deref(), &out)
}

#[derive(Args)]
struct MomentsArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    nmax: Option<usize>,
    /// Highest integer moment order M
    #[arg(long)]
    orders: Option<usize>,
}

fn cmd_moments(args: &MomentsArgs) -> Result<()> {
    let cfg = args.common.load()?;
    let measure = args.common.measure(&cfg)?;
    let n_max = args.nmax.or(cfg.n_max).unwrap_or(1024);
    let orders = args.orders.or(cfg.orders).unwrap_or(2);
    let rates = RateTable::build(&measure, n_max)?;
    let table = MomentTable::solve(&rates, orders)?;
    let law = LimitLaw::from_measure(&measure);
    let mut out = String::new();
    out.push_str("n,ET1");
    for m in 2..=table.orders() {
        out.push_str(&format!(",ET1_{m}"));
    }
    out.push_str(",ET1T2,var,cov,mse,rescaled_ET1,rescaled_cov,rescaled_mse\n");
    for n in 2..=n_max {
        out.push_str(&format!("{},{}", n, table.first(n)));
        for m in 2..=table.orders() {
            out.push_str(&format!(",{}", table.moment(m, n)));
        }
        out.push_str(&format!(
            ",{},{},{},{},{},{},{}\n",
            table.pair(n),
            table.variance(n),
            table.covariance(n),
            table.lext_mse(law.expected_value(), n),
            table.rescaled_first(n),
            table.rescaled_covariance(n),
            table.rescaled_mse(&law, n),
        ));
    }
    write_output(args.common.out(&cfg).as_deref(), &out)
}

#[derive(Args)]
struct AsymptoticsArgs {
    #[command(flatten)]
    common: CommonArgs,
}

fn cmd_asymptotics(args: &AsymptoticsArgs) -> Result<()> {
    let cfg = args.common.load()?;
    let measure = args.common.measure(&cfg)?;
    let law = LimitLaw::from_measure(&measure);
    let alpha = measure.alpha();
    let mut doc = serde_json::json!({
        "alpha": alpha,
        "zeta": measure.zeta(),
        "case_id": measure.case_id(),
        "c0": measure.c0(),
        "scale_c": law.c,
        "kappa": law.kappa,
        "expected_t": law.expected_value(),
        "var_t": law.variance(),
        "density_at_zero": law.density(0.0)?,
    });
    let obj = doc.as_object_mut().unwrap();
    if measure.case_id() == CaseId::CaseIII {
        obj.insert("delta".into(), serde_json::json!(delta_alpha(&measure)?));
        obj.insert(
            "delta_integral".into(),
            serde_json::json!(delta_alpha_integral(&measure)?),
        );
    }
    if matches!(measure.kind(), coalescent::measure::MeasureKind::Beta) {
        let k = beta_constants(alpha)?;
        obj.insert("constants".into(), serde_json::to_value(k)?);
        obj.insert(
            "identity_residual".into(),
            serde_json::json!(asymptotics::beta_constants_identity_residual(&measure)?),
        );
    }
    let ids: &[TheoremId] = match measure.case_id() {
        CaseId::CaseI => &[TheoremId::T4Case1],
        CaseId::CaseII => &[TheoremId::T4Case2],
        CaseId::CaseIII => &[
            TheoremId::T4Case3,
            TheoremId::T6Case3,
            TheoremId::C7Case3,
            TheoremId::T1,
        ],
    };
    let preds: Vec<_> = ids
        .iter()
        .map(|&id| theorem_prediction(&measure, id))
        .collect::<coalescent::Result<_>>()?;
    obj.insert("predictions".into(), serde_json::to_value(preds)?);
    let text = format!("{}\n", serde_json::to_string_pretty(&doc)?);
    write_output(args.common.out(&cfg).as_deref(), &text)
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sample size (number of leaves)
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Also write per-replicate records as CSV
    #[arg(long)]
    raw: Option<PathBuf>,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = args.common.load()?;
    let measure = args.common.measure(&cfg)?;
    let n = args.n.or(cfg.n_max).unwrap_or(100);
    let replicates = args.replicates.or(cfg.replicates).unwrap_or(10_000);
    let seed = args.seed.or(cfg.seed).unwrap_or(1);
    let workers = resolve_workers(args.workers, &cfg);
    let records = run_replicates(&measure, n, replicates, seed, workers)?;
    let summary = summarize(&measure, n, seed, &records);
    let mut out = String::new();
    out.push_str(
        "n,replicates,seed,mean_T1,se_T1,mean_T1_sq,se_T1_sq,mean_T1T2,se_T1T2,\
         mean_L_ext,se_L_ext,mean_L_total,se_L_total,mean_tau,se_tau,mean_ext_ratio,se_ext_ratio\n",
    );
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        n,
        replicates,
        seed,
        summary.external_first.mean,
        summary.external_first.std_error,
        summary.external_first_sq.mean,
        summary.external_first_sq.std_error,
        summary.external_pair_product.mean,
        summary.external_pair_product.std_error,
        summary.l_ext.mean,
        summary.l_ext.std_error,
        summary.l_total.mean,
        summary.l_total.std_error,
        summary.tau.mean,
        summary.tau.std_error,
        summary.external_ratio.mean,
        summary.external_ratio.std_error,
    ));
    write_output(args.common.out(&cfg).as_deref(), &out)?;
    if let Some(raw_path) = args.raw.clone().or(cfg.raw_out) {
        let mut raw = String::with_capacity(records.len() * 64);
        raw.push_str("replicate,L_ext,L_total,tau,T_random_external\n");
        for r in &records {
            raw.push_str(&format!(
                "{},{},{},{},{}\n",
                r.replicate, r.l_ext, r.l_total, r.tau, r.t_random
            ));
        }
        fs::write(&raw_path, raw).with_context(|| format!("writing {}", raw_path.display()))?;
    }
    Ok(())
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Override the table depth used by the slope/limit criteria
    #[arg(long)]
    nmax: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated criterion ids to run (default: all)
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<u32>,
    /// Reduced-scale smoke run (not the acceptance configuration)
    #[arg(long)]
    quick: bool,
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let cfg = args.common.load()?;
    let mut vc = cfg.verify.clone().unwrap_or_default();
    if args.quick {
        vc.n_max = 512;
        vc.cov_n = 256;
        vc.fit_n_min = 32;
        vc.mc_replicates = 20_000;
        vc.mc_ns = vec![5, 20];
        vc.merger_draws = 100_000;
        vc.ks_n = 200;
        vc.ks_replicates = 5_000;
    }
    if let Some(alpha) = args.common.alpha {
        vc.alpha_main = alpha;
    }
    if let Some(nmax) = args.nmax.or(cfg.n_max) {
        vc.n_max = nmax;
        vc.cov_n = vc.cov_n.min(nmax);
    }
    if let Some(seed) = args.seed.or(cfg.seed) {
        vc.master_seed = seed;
    }
    vc.workers = resolve_workers(args.workers, &cfg);
    if !args.criteria.is_empty() {
        vc.criteria = args.criteria.clone();
    }
    let report = run_verification(&vc)?;
    for line in report.summary_lines() {
        eprintln!("{line}");
    }
    if args.quick {
        eprintln!(
            "note: --quick runs reduced scales; tolerances are calibrated for the full configuration"
        );
    }
    let text = format!("{}\n", serde_json::to_string_pretty(&report)?);
    write_output(args.common.out(&cfg).as_deref(), &text)?;
    let any_fail = report
        .criteria
        .iter()
        .any(|c| c.status == CheckStatus::Fail);
    Ok(if any_fail { 1 } else { 0 })
}

fn main() {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Rates(a) => cmd_rates(a).map(|()| 0),
        Cmd::Moments(a) => cmd_moments(a).map(|()| 0),
        Cmd::Asymptotics(a) => cmd_asymptotics(a).map(|()| 0),
        Cmd::Simulate(a) => cmd_simulate(a).map(|()| 0),
        Cmd::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
