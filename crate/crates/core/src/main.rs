use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gsa::adaptive::{run_adaptive, AdaptiveConfig};
use gsa::design::{
    build_schedule, effect_pairs, plan_for_budget, sobol_bases, DesignConfig, Scheme,
};
use gsa::estimators::{estimate, EstimatorKind, EvaluatedSchedule};
use gsa::harness::{run_benchmark, BenchmarkSpec};
use gsa::io;
use gsa::models::{evaluate_batch, Evaluator, ExternalModelSpec, GFunctionSpec, ModelSpec};
use gsa::qrng::{self, QrPointSet, RandomizationSpec};

#[derive(Parser)]
#[command(
    name = "gsa",
    version,
    about = "Variance-based sensitivity analysis toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write Sobol' points to CSV.
    Sample {
        #[arg(long)]
        dims: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = qrng::DEFAULT_SKIP)]
        skip: u64,
        /// Permute columns with this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Add a random shift modulo 1 (needs --seed).
        #[arg(long)]
        shift: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the L2-star discrepancy of a point file.
    Discrepancy {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Write the runs and effect pairs of a design.
    Design {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long)]
        rows: usize,
        #[arg(long, default_value = "asym")]
        scheme: Scheme,
        /// Also evaluate the donor matrices of an asymmetric design.
        #[arg(long)]
        donors: bool,
        #[arg(long, default_value_t = qrng::DEFAULT_SKIP)]
        skip: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate designs that fit a run budget.
    Plan {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        budget: usize,
        #[arg(long, default_value = "sym")]
        scheme: Scheme,
        /// Candidate numbers of base matrices.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,7,10")]
        n: Vec<usize>,
    },
    /// Evaluate a model on every run of a runs file.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate sensitivity indices from runs, pairs and outputs.
    Estimate {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value = "saltenis")]
        estimator: EstimatorKind,
        #[arg(long)]
        first_order: bool,
        /// JSON report; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the adaptive total-effect sampler.
    Adaptive {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        budget: usize,
        #[arg(long, default_value_t = 32)]
        nts: usize,
        #[arg(long, default_value_t = 1e-4)]
        delta: f64,
        #[arg(long, default_value_t = 19)]
        p: usize,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a benchmark described by a key=value file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// g, linear, additive or external.
    #[arg(long, default_value = "g")]
    model: String,
    /// G-function coefficients.
    #[arg(long)]
    a: Option<GFunctionSpec>,
    /// Shell command of an external model; `{input}` and `{output}` are
    /// replaced by the file paths.
    #[arg(long)]
    command: Option<String>,
    #[arg(long, default_value = "gsa_input.csv")]
    input: PathBuf,
    #[arg(long, default_value = "gsa_output.txt")]
    output: PathBuf,
    /// Seconds before an external model is killed.
    #[arg(long, default_value_t = 600)]
    timeout: u64,
}

impl ModelArgs {
    fn build(self) -> Result<ModelSpec> {
        Ok(match self.model.as_str() {
            "g" => ModelSpec::G(self.a.unwrap_or_else(GFunctionSpec::benchmark)),
            "external" => ModelSpec::External(ExternalModelSpec {
                command: self.command.context("--model external needs --command")?,
                input_path: self.input,
                output_path: self.output,
                timeout: Duration::from_secs(self.timeout),
            }),
            other => ModelSpec::Builtin(other.parse()?),
        })
    }
}

fn randomization(seed: Option<u64>, dims: usize) -> Option<RandomizationSpec> {
    seed.map(|s| RandomizationSpec::from_seed(s, dims))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Sample {
            dims,
            count,
            skip,
            seed,
            shift,
            out,
        } => {
            if shift && seed.is_none() {
                bail!("--shift needs --seed");
            }
            let mut pts = qrng::sobol_points(dims, count, skip)?;
            if let Some(spec) = randomization(seed, dims) {
                pts = qrng::randomize(&pts, &spec.with_shift(shift))?;
            }
            io::write_points(&out, dims, pts.as_slice())?;
        }
        Cmd::Discrepancy { input } => {
            let pts = io::read_points(&input)?;
            println!("{}", qrng::l2_discrepancy(&pts)?.value);
        }
        Cmd::Design {
            k,
            n,
            rows,
            scheme,
            donors,
            skip,
            seed,
            out,
        } => {
            let mut cfg = DesignConfig {
                k,
                n,
                rows,
                scheme,
                evaluate_donors: false,
            };
            if donors {
                cfg = cfg.with_donors();
            }
            cfg.validate()?;
            let bases = sobol_bases(n, k, rows, skip, randomization(seed, n * k).as_ref())?;
            let (schedule, pairs) = build_schedule(&cfg, &bases)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            io::write_runs(&out.join("runs.csv"), &schedule)?;
            io::write_pairs(&out.join("pairs.csv"), &pairs)?;
            eprintln!(
                "{} runs, {} elementary effects",
                schedule.len(),
                pairs.total()
            );
        }
        Cmd::Plan {
            k,
            budget,
            scheme,
            n,
        } => {
            let plan = plan_for_budget(k, budget, scheme, &n)?;
            println!("scheme  n     N     N_T     E_T       e    nN  discrepancy");
            for row in &plan.rows {
                let bases = sobol_bases(row.n, k, row.rows, qrng::DEFAULT_SKIP, None)?;
                let stacked: Vec<f64> = bases
                    .iter()
                    .flat_map(|b| b.as_slice().iter().copied())
                    .collect();
                let d = qrng::l2_discrepancy(&QrPointSet::from_rows(k, stacked)?)?;
                println!(
                    "{:<6} {:>2} {:>5} {:>7} {:>7} {:>7.3} {:>5}  {:.6}",
                    row.scheme.to_string(),
                    row.n,
                    row.rows,
                    row.budget.total_runs,
                    row.budget.total_effects,
                    row.budget.economy,
                    row.budget.explored,
                    d.value
                );
            }
            for note in &plan.notes {
                println!("# {note}");
            }
        }
        Cmd::Eval { model, runs, out } => {
            let model = model.build()?;
            let schedule = io::read_runs(&runs)?;
            let mut evaluator = Evaluator::new(&model);
            let y = evaluate_batch(&mut evaluator, &schedule)?;
            io::write_values(&out, &y)?;
        }
        Cmd::Estimate {
            runs,
            pairs,
            y,
            estimator,
            first_order,
            out,
        } => {
            let schedule = io::read_runs(&runs)?;
            let pairs = io::read_pairs(&pairs, schedule.k())?;
            pairs.validate(&schedule)?;
            if pairs != effect_pairs(&schedule) {
                eprintln!("warning: pairs differ from the canonical pairs of this design");
            }
            let y = io::read_values(&y)?;
            let ev = EvaluatedSchedule::new(schedule, y, "file")?;
            let report = estimate(&ev, &pairs, estimator, first_order)?;
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(path) => fs::write(&path, json + "\n")?,
                None => println!("{json}"),
            }
        }
        Cmd::Adaptive {
            model,
            k,
            budget,
            nts,
            delta,
            p,
            epsilon,
            seed,
            trace,
        } => {
            let model = model.build()?;
            let k = match (&model, k) {
                (ModelSpec::G(g), Some(k)) if k != g.k() => {
                    bail!("--k {k} does not match the {} G coefficients", g.k())
                }
                (ModelSpec::G(g), _) => g.k(),
                (_, Some(k)) => k,
                (_, None) => bail!("--k is required for this model"),
            };
            let cfg = AdaptiveConfig {
                warmup_rows: nts,
                delta,
                window: p,
                epsilon,
                ..AdaptiveConfig::new(budget, seed)
            };
            let result = run_adaptive(&model, k, &cfg)?;
            if let Some(path) = trace {
                result.write_csv(&path)?;
            }
            let last = result.last();
            println!("evaluations {}", last.evaluations);
            for (j, (t, c)) in last.estimates.iter().zip(&last.pair_counts).enumerate() {
                println!("T{} {t:.6} ({c} pairs)", j + 1);
            }
        }
        Cmd::Bench { config, out } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let spec = BenchmarkSpec::parse_config(&text)?;
            let table = run_benchmark(&spec)?;
            table.write_csv(&out)?;
            let mut infeasible = 0;
            for row in &table.rows {
                match row.mae_t {
                    Some(m) => println!(
                        "{:<24} {:>6} {:>6}  MAE_T {m:.6}",
                        row.contender,
                        row.target,
                        row.actual.unwrap_or(0)
                    ),
                    None => {
                        infeasible += 1;
                        println!("{:<24} {:>6}  infeasible", row.contender, row.target);
                    }
                }
            }
            if infeasible > 0 {
                eprintln!("{infeasible} contender rows are infeasible");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
