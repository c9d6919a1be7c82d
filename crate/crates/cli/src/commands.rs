//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use relsyn_core::baseline::{generate_table, BaselineConfig};
use relsyn_core::orchestrator::{evaluate, synthesize, EvaluationReport, RunReport};
use relsyn_core::privacy::{compose_total, BudgetLedger};
use relsyn_core::projection::project_capped_simplex;
use relsyn_core::relational::Table;
use relsyn_core::rng::RngStreams;
use relsyn_core::sampler::ubs;
use serde::Serialize;

use crate::bundle::{
    load_bundle, read_table, save_bundle, Bundle, BundleFiles, ColumnDictionary, LoadOptions,
    SaveContext,
};
use crate::config::{parse_budget_keys, parse_config};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "relsyn",
    version,
    about = "Differentially private synthetic relational databases"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a private synthetic link table between two synthetic tables.
    Synthesize(SynthesizeArgs),
    /// Compare cross-table marginals of one bundle against a reference.
    Evaluate(EvaluateArgs),
    /// Show how a privacy budget spreads over a planned run.
    Budget(BudgetArgs),
    /// Project a vector onto the capped simplex {0 <= x <= 1, sum x = m}.
    Project(ProjectArgs),
    /// Draw a fixed-size unbiased index sample from fractional weights.
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Real table 1 CSV (the child side for one-to-many data).
    #[arg(long)]
    pub table1: PathBuf,
    /// Real table 2 CSV.
    #[arg(long)]
    pub table2: PathBuf,
    /// Real relation pairs CSV with two columns.
    #[arg(long)]
    pub relations: PathBuf,
    /// Manifest declaring dictionaries and kind for the real data.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Read the input CSVs as tab-separated.
    #[arg(long)]
    pub tab: bool,
    /// Id column of table 1; relations then use ids instead of row indices.
    #[arg(long)]
    pub id_column1: Option<String>,
    /// Id column of table 2.
    #[arg(long)]
    pub id_column2: Option<String>,
    /// Keep only each record's first edges up to this degree on both sides.
    #[arg(long)]
    pub d_max_cap: Option<usize>,
    /// Pre-built synthetic table 1 CSV; otherwise a [table1] config section
    /// must describe how to generate one.
    #[arg(long)]
    pub syn_table1: Option<PathBuf>,
    /// Pre-built synthetic table 2 CSV.
    #[arg(long)]
    pub syn_table2: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Reference bundle directory.
    #[arg(long)]
    pub real: PathBuf,
    /// Bundle directory to score against the reference.
    #[arg(long)]
    pub syn: PathBuf,
    /// Marginal order to evaluate.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// TOML config; only eps_rel, delta_rel, T, K, and alpha are read.
    #[arg(long)]
    pub config: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Input vector, one number per line.
    pub input: PathBuf,
    /// Required coordinate sum of the projection.
    #[arg(long)]
    pub target: f64,
    /// Absolute tolerance on the projected sum.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Weight vector in [0, 1], one number per line, summing to m.
    pub input: PathBuf,
    /// Number of indices to draw.
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Synthesize(args) => run_synthesize(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Budget(args) => run_budget(args),
        Command::Project(args) => run_project(args),
        Command::Sample(args) => run_sample(args),
    }
}

/// Per-table generation cost carried into the composed total.
#[derive(Debug, Clone, Serialize)]
pub struct TableBudget {
    pub eps: f64,
    pub delta: f64,
    pub rho_charged: f64,
}

/// Everything a synthesis run releases about itself.
#[derive(Debug, Serialize)]
pub struct FullReport {
    pub run: RunReport,
    pub table1_budget: Option<TableBudget>,
    pub table2_budget: Option<TableBudget>,
    /// Sequential composition over both tables and the relationship.
    pub total_eps: f64,
    pub total_delta: f64,
}

fn read_config_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn synthetic_table(
    side: usize,
    real: &Table,
    dicts: &[ColumnDictionary],
    path: Option<&Path>,
    baseline: Option<&BaselineConfig>,
    delimiter: u8,
    streams: &RngStreams,
) -> Result<(Table, Option<TableBudget>), CliError> {
    match (path, baseline) {
        (Some(path), _) => {
            let (table, _, _) = read_table(path, delimiter, None, Some(dicts))?;
            Ok((table, None))
        }
        (None, Some(cfg)) => {
            let mut rng = streams.stream(&format!("table{side}-baseline"));
            let outcome = generate_table(real, cfg, &mut rng)?;
            let budget =
                TableBudget { eps: cfg.eps, delta: cfg.delta, rho_charged: outcome.rho_charged };
            Ok((outcome.table, Some(budget)))
        }
        (None, None) => Err(CliError::Usage(format!(
            "no synthetic source for table {side}: pass --syn-table{side} or add a [table{side}] config section"
        ))),
    }
}

fn render_evaluation(report: &EvaluationReport) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "marginal order: {}", report.marginal_order);
    let _ = writeln!(text, "average l1 error: {:.6}", report.average_l1_error);
    let mut ranked: Vec<_> = report.per_workload.iter().collect();
    ranked.sort_by(|a, b| b.l1_error.total_cmp(&a.l1_error));
    for w in ranked.iter().take(10) {
        let _ = writeln!(text, "  {}: l1 = {:.6}, mse = {:.3e}", w.workload, w.l1_error, w.mse);
    }
    if ranked.len() > 10 {
        let _ = writeln!(text, "  ... {} more workloads", ranked.len() - 10);
    }
    text
}

fn render_full_report(report: &FullReport) -> String {
    let run = &report.run;
    let ledger = &run.manifest.ledger;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "synthesized {} edges in {} iterations (seed {})",
        run.manifest.config.m_syn,
        run.manifest.config.iterations,
        run.manifest.seed
    );
    let _ = writeln!(
        text,
        "relationship budget: rho = {}, spent = {}, eps0 = {}",
        ledger.rho_total(),
        ledger.rho_spent(),
        ledger.eps0()
    );
    let _ = writeln!(
        text,
        "relationship (eps, delta): ({}, {})",
        run.budget.eps_equivalent_at_delta, run.manifest.config.delta_rel
    );
    for (side, budget) in [(1, &report.table1_budget), (2, &report.table2_budget)] {
        match budget {
            Some(b) => {
                let _ = writeln!(
                    text,
                    "table {side} baseline: eps = {}, delta = {}, rho = {}",
                    b.eps, b.delta, b.rho_charged
                );
            }
            None => {
                let _ = writeln!(text, "table {side}: supplied externally, no charge here");
            }
        }
    }
    let _ = writeln!(
        text,
        "total release (eps, delta): ({}, {})",
        report.total_eps, report.total_delta
    );
    text.push_str(&render_evaluation(&run.evaluation));
    text
}

fn run_synthesize(args: &SynthesizeArgs) -> Result<(), CliError> {
    let mut cfg = parse_config(&read_config_file(&args.config)?)?;
    if let Some(seed) = args.seed {
        cfg.synthesis.seed = seed;
    }
    let delimiter = if args.tab { b'\t' } else { b',' };

    let files = BundleFiles {
        table1: args.table1.clone(),
        table2: args.table2.clone(),
        relations: args.relations.clone(),
        manifest: args.manifest.clone(),
    };
    let opts = LoadOptions {
        delimiter,
        kind: cfg.synthesis.kind,
        id_column1: args.id_column1.clone(),
        id_column2: args.id_column2.clone(),
        d_max_cap: args.d_max_cap,
        dicts1: None,
        dicts2: None,
    };
    let real = load_bundle(&files, &opts)?;
    if real.db.kind() != cfg.synthesis.kind {
        return Err(CliError::Usage(format!(
            "config kind {:?} does not match the manifest kind {:?}",
            cfg.synthesis.kind,
            real.db.kind()
        )));
    }

    let streams = RngStreams::new(cfg.synthesis.seed);
    let (syn1, budget1) = synthetic_table(
        1,
        real.db.table1(),
        &real.dicts1,
        args.syn_table1.as_deref(),
        cfg.table1.as_ref(),
        delimiter,
        &streams,
    )?;
    let (syn2, budget2) = synthetic_table(
        2,
        real.db.table2(),
        &real.dicts2,
        args.syn_table2.as_deref(),
        cfg.table2.as_ref(),
        delimiter,
        &streams,
    )?;

    let (syn_db, run) = synthesize(&real.db, &syn1, &syn2, &cfg.synthesis)?;

    let (eps1, delta1) = budget1.as_ref().map_or((0.0, 0.0), |b| (b.eps, b.delta));
    let (eps2, delta2) = budget2.as_ref().map_or((0.0, 0.0), |b| (b.eps, b.delta));
    let (total_eps, total_delta) = compose_total(
        eps1,
        delta1,
        eps2,
        delta2,
        run.budget.eps_equivalent_at_delta,
        cfg.synthesis.delta_rel,
    );
    let report = FullReport {
        run,
        table1_budget: budget1,
        table2_budget: budget2,
        total_eps,
        total_delta,
    };

    let out_bundle = Bundle {
        db: syn_db,
        dicts1: real.dicts1.clone(),
        dicts2: real.dicts2.clone(),
    };
    let ctx = SaveContext {
        m: Some(real.db.adjacency().edge_count()),
        seed: Some(cfg.synthesis.seed),
        config: Some(cfg.synthesis.clone()),
    };
    save_bundle(&out_bundle, &ctx, &args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    let text = render_full_report(&report);
    fs::write(args.out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let real = load_bundle(&BundleFiles::in_dir(&args.real), &LoadOptions::default())?;
    let syn_opts = LoadOptions {
        dicts1: Some(real.dicts1.clone()),
        dicts2: Some(real.dicts2.clone()),
        ..LoadOptions::default()
    };
    let syn = load_bundle(&BundleFiles::in_dir(&args.syn), &syn_opts)?;
    let report = evaluate(&real.db, &syn.db, args.k)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    print!("{}", render_evaluation(&report));
    Ok(())
}

fn run_budget(args: &BudgetArgs) -> Result<(), CliError> {
    let keys = parse_budget_keys(&read_config_file(&args.config)?)?;
    let ledger = BudgetLedger::from_eps_delta(
        keys.eps_rel,
        keys.delta_rel,
        keys.workloads_per_iteration,
        keys.iterations,
        keys.alpha,
    )?;
    let report = ledger.report(keys.delta_rel)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    println!(
        "planned calls: {} ({} iterations x {} selections)",
        keys.iterations * keys.workloads_per_iteration,
        keys.iterations,
        keys.workloads_per_iteration
    );
    println!("rho_total = {}", report.rho_total);
    println!("eps0 = {}", report.eps0);
    println!("per_iteration_spend = {}", report.per_iteration_spend);
    println!("eps_equivalent_at_delta = {}", report.eps_equivalent_at_delta);
    Ok(())
}

fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(line.parse::<f64>().map_err(|_| {
            CliError::Data(format!("{}: line {}: not a number: {line:?}", path.display(), i + 1))
        })?);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: empty vector", path.display())));
    }
    Ok(out)
}

fn write_lines<T: std::fmt::Display>(out: Option<&Path>, values: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for v in values {
        let _ = writeln!(text, "{v}");
    }
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_project(args: &ProjectArgs) -> Result<(), CliError> {
    let v = read_vector(&args.input)?;
    let projected = project_capped_simplex(&v, args.target, args.tolerance)?;
    write_lines(args.out.as_deref(), &projected)
}

fn run_sample(args: &SampleArgs) -> Result<(), CliError> {
    let weights = read_vector(&args.input)?;
    let mut rng = RngStreams::new(args.seed).stream("sample");
    let picked = ubs(&weights, args.m, &mut rng)?;
    write_lines(args.out.as_deref(), &picked)
}
