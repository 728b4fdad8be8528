//! Command-line driver: instance generation, single solves and benchmark
//! sweeps with CSV output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{brute_force_solve, chain_order, solve_sabb_detailed};
use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::model::{generate_max_dcsp, generate_random_adcop, AdcopInstance};
use crate::pseudo_tree::PseudoTree;
use crate::search::{solve_pt_isabb_detailed, SolveOptions, Variant};
use crate::sim::{Metrics, MsgCounts, MsgKind};
use crate::utility::DimLimit;

#[derive(Parser, Debug)]
#[command(
    name = "ptisabb",
    about = "Asymmetric DCOP solver and benchmark toolkit",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a random instance and write it as JSON.
    Generate(GenerateArgs),
    /// Solve an instance file and print the solution and run metrics.
    Solve(SolveArgs),
    /// Run a benchmark sweep described by a JSON spec file.
    Experiment(ExperimentArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Uniform random costs in [0, max-cost].
    Random,
    /// Asymmetric MaxDCSP: prohibited pairs cost 1.
    Maxdcsp,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = Family::Random)]
    pub family: Family,
    #[arg(long)]
    pub agents: usize,
    #[arg(long)]
    pub density: f64,
    #[arg(long, default_value_t = 3)]
    pub domain: usize,
    /// Maximum cost per entry (random family).
    #[arg(long, default_value_t = 100)]
    pub max_cost: u64,
    /// Prohibition probability per value pair (maxdcsp family).
    #[arg(long)]
    pub tightness: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path for the instance JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Instance file (JSON).
    pub instance: PathBuf,
    /// pt-isabb | pt-isabb-local | pt-sabb | sabb | brute
    #[arg(long)]
    pub algo: String,
    /// Dimension limit for the inference phase (a number or "inf").
    #[arg(long, default_value = "inf")]
    pub k: DimLimit,
    /// Elimination variant for pt-isabb: nonlocal (default) or local.
    #[arg(long)]
    pub variant: Option<String>,
    /// Append the run as a CSV row to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub timeout_s: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Experiment spec file (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Override the spec's output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A solving algorithm plus its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    PtIsabb { k: DimLimit, variant: Variant },
    PtSabb,
    Sabb,
    Brute,
}

impl Algorithm {
    pub fn parse(algo: &str, k: DimLimit, variant: Option<&str>) -> Result<Algorithm> {
        match algo {
            "pt-isabb" => {
                let variant = match variant {
                    None | Some("nonlocal") | Some("non-local") => Variant::NonLocal,
                    Some("local") => Variant::Local,
                    Some(other) => {
                        return Err(Error::InvalidParameter(format!(
                            "unknown variant `{other}` (expected nonlocal or local)"
                        )))
                    }
                };
                Ok(Algorithm::PtIsabb { k, variant })
            }
            "pt-isabb-local" => Ok(Algorithm::PtIsabb {
                k,
                variant: Variant::Local,
            }),
            "pt-sabb" => Ok(Algorithm::PtSabb),
            "sabb" => Ok(Algorithm::Sabb),
            "brute" => Ok(Algorithm::Brute),
            other => Err(Error::UnknownAlgorithm(other.to_string())),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Algorithm::PtIsabb { .. } => "pt-isabb",
            Algorithm::PtSabb => "pt-sabb",
            Algorithm::Sabb => "sabb",
            Algorithm::Brute => "brute",
        }
    }

    fn variant_label(&self) -> String {
        match self {
            Algorithm::PtIsabb { variant, .. } => match variant {
                Variant::NonLocal => "nonlocal".into(),
                Variant::Local => "local".into(),
                Variant::NoInference => "none".into(),
            },
            _ => String::new(),
        }
    }

    fn k_label(&self) -> String {
        match self {
            Algorithm::PtIsabb { k, .. } => k.to_string(),
            _ => String::new(),
        }
    }
}

/// Runs one algorithm on one instance.
pub fn run_algorithm(
    instance: &AdcopInstance,
    algorithm: Algorithm,
    timeout: Option<Duration>,
) -> Result<(Metrics, crate::model::Assignment)> {
    let options = SolveOptions {
        timeout,
        trace: false,
    };
    match algorithm {
        Algorithm::PtIsabb { k, variant } => {
            let tree = PseudoTree::build(instance)?;
            let (solution, _) = solve_pt_isabb_detailed(instance, &tree, k, variant, options)?;
            Ok((solution.metrics, solution.assignment))
        }
        Algorithm::PtSabb => {
            let tree = PseudoTree::build(instance)?;
            let (solution, _) = solve_pt_isabb_detailed(
                instance,
                &tree,
                DimLimit::Unbounded,
                Variant::NoInference,
                options,
            )?;
            Ok((solution.metrics, solution.assignment))
        }
        Algorithm::Sabb => {
            let tree = PseudoTree::build(instance)?;
            let order = chain_order(&tree);
            let (solution, _) = solve_sabb_detailed(instance, &order, options)?;
            Ok((solution.metrics, solution.assignment))
        }
        Algorithm::Brute => {
            let (cost, assignment) = brute_force_solve(instance)?;
            let metrics = Metrics {
                solution_cost: cost,
                nclo: 0,
                msgs: MsgCounts::default(),
                traffic: 0,
                privacy_loss: 0.0,
            };
            Ok((metrics, assignment))
        }
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let instance = match args.family {
        Family::Random => generate_random_adcop(
            args.agents,
            args.density,
            args.domain,
            args.max_cost,
            args.seed,
        )?,
        Family::Maxdcsp => {
            let tightness = args.tightness.ok_or_else(|| {
                Error::InvalidParameter("--tightness is required for the maxdcsp family".into())
            })?;
            generate_max_dcsp(args.agents, args.density, args.domain, tightness, args.seed)?
        }
    };
    instance.save(&args.out)?;
    println!(
        "wrote {}: {} agents, {} constraints, domain {}",
        args.out.display(),
        instance.agent_count(),
        instance.constraints().len(),
        args.domain
    );
    Ok(())
}

pub fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let instance = AdcopInstance::load(&args.instance)?;
    let algorithm = Algorithm::parse(&args.algo, args.k, args.variant.as_deref())?;
    let timeout = args.timeout_s.map(Duration::from_secs);
    let (metrics, assignment) = run_algorithm(&instance, algorithm, timeout)?;

    let values = assignment.to_values(instance.agent_count())?;
    println!("cost: {}", metrics.solution_cost);
    println!("assignment: {values:?}");
    println!("nclo: {}", metrics.nclo);
    println!(
        "messages: total={} util={} cpa={} cost_req={} cost={} backtrack={} terminate={}",
        metrics.msgs.total(),
        metrics.msgs.get(MsgKind::Util),
        metrics.msgs.get(MsgKind::Cpa),
        metrics.msgs.get(MsgKind::CostReq),
        metrics.msgs.get(MsgKind::Cost),
        metrics.msgs.get(MsgKind::Backtrack),
        metrics.msgs.get(MsgKind::Terminate),
    );
    println!("traffic: {}", metrics.traffic);
    println!("privacy_loss: {:.6}", metrics.privacy_loss);

    if let Some(out) = &args.out {
        let row = RunRow {
            algorithm: algorithm.label().into(),
            variant: algorithm.variant_label(),
            k: algorithm.k_label(),
            n: instance.agent_count(),
            density: None,
            domain: instance.domain_size(0),
            tightness: None,
            seed: None,
            outcome: RunOutcome::Ok(metrics),
        };
        let mut text = String::new();
        if !out.exists() {
            text.push_str(CSV_HEADER);
            text.push('\n');
        }
        text.push_str(&row.to_csv());
        text.push('\n');
        use std::io::Write;
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(out)?;
        file.write_all(text.as_bytes())?;
    }
    Ok(())
}

/// JSON description of a benchmark sweep.
#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct ExperimentSpec {
    pub family: SpecFamily,
    #[serde(default)]
    pub agents: Option<usize>,
    #[serde(default)]
    pub density: Option<f64>,
    #[serde(default)]
    pub domain: Option<usize>,
    #[serde(default)]
    pub tightness: Option<f64>,
    #[serde(default = "default_max_cost")]
    pub max_cost: u64,
    pub sweep: Sweep,
    #[serde(default = "default_instances")]
    pub instances: usize,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_max_cost() -> u64 {
    100
}

fn default_instances() -> usize {
    50
}

fn default_timeout() -> u64 {
    120
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecFamily {
    #[serde(rename = "random_adcop")]
    RandomAdcop,
    #[serde(rename = "max_dcsp")]
    MaxDcsp,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Agents,
    Density,
    Tightness,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct AlgorithmSpec {
    pub algo: String,
    #[serde(default)]
    pub k: Option<KSpec>,
    #[serde(default)]
    pub variant: Option<String>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
#[serde(untagged)]
pub enum KSpec {
    Number(usize),
    Name(String),
}

impl AlgorithmSpec {
    fn resolve(&self) -> Result<Algorithm> {
        let k = match &self.k {
            None => DimLimit::Unbounded,
            Some(KSpec::Number(v)) => DimLimit::new(*v)?,
            Some(KSpec::Name(s)) => s.parse()?,
        };
        Algorithm::parse(&self.algo, k, self.variant.as_deref())
    }
}

pub const CSV_HEADER: &str = "algorithm,variant,k,n,density,domain,tightness,seed,cost,nclo,msgs_total,msgs_util,msgs_cpa,msgs_cost,msgs_backtrack,traffic,privacy_loss,status";

#[derive(Clone, Debug)]
pub enum RunOutcome {
    Ok(Metrics),
    Timeout,
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct RunRow {
    pub algorithm: String,
    pub variant: String,
    pub k: String,
    pub n: usize,
    pub density: Option<f64>,
    pub domain: usize,
    pub tightness: Option<f64>,
    pub seed: Option<u64>,
    pub outcome: RunOutcome,
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl RunRow {
    pub fn to_csv(&self) -> String {
        let mut line = format!(
            "{},{},{},{},{},{},{},{}",
            self.algorithm,
            self.variant,
            self.k,
            self.n,
            opt_f64(self.density),
            self.domain,
            opt_f64(self.tightness),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
        );
        match &self.outcome {
            RunOutcome::Ok(m) => {
                let _ = write!(
                    line,
                    ",{},{},{},{},{},{},{},{},{:.6},ok",
                    m.solution_cost,
                    m.nclo,
                    m.msgs.total(),
                    m.msgs.get(MsgKind::Util),
                    m.msgs.get(MsgKind::Cpa),
                    m.msgs.get(MsgKind::Cost),
                    m.msgs.get(MsgKind::Backtrack),
                    m.traffic,
                    m.privacy_loss,
                );
            }
            RunOutcome::Timeout => line.push_str(",,,,,,,,,timeout"),
            RunOutcome::Failed(_) => line.push_str(",,,,,,,,,error"),
        }
        line
    }
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec)?;
    let spec: ExperimentSpec = serde_json::from_str(&text)?;
    let out = args
        .out
        .clone()
        .or_else(|| spec.out.clone())
        .ok_or_else(|| Error::InvalidParameter("no output path (--out or spec.out)".into()))?;
    let rows = run_experiment(&spec)?;

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    std::fs::write(&out, csv)?;

    let agg_path = aggregate_path(&out);
    std::fs::write(&agg_path, aggregate_csv(&spec, &rows))?;
    println!(
        "wrote {} rows to {} (aggregates in {})",
        rows.len(),
        out.display(),
        agg_path.display()
    );
    Ok(())
}

pub fn aggregate_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.agg.csv"))
}

/// Runs the sweep: one row per (point, instance, algorithm).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRow>> {
    if spec.sweep.values.is_empty() {
        return Err(Error::InvalidParameter("empty sweep".into()));
    }
    if spec.instances == 0 {
        return Err(Error::InvalidParameter("instances must be >= 1".into()));
    }
    let algorithms: Vec<(AlgorithmSpec, Algorithm)> = spec
        .algorithms
        .iter()
        .map(|a| a.resolve().map(|r| (a.clone(), r)))
        .collect::<Result<_>>()?;
    if algorithms.is_empty() {
        return Err(Error::InvalidParameter("no algorithms listed".into()));
    }
    let timeout = (spec.timeout_s > 0).then(|| Duration::from_secs(spec.timeout_s));

    let mut rows = Vec::new();
    for &point in &spec.sweep.values {
        let params = point_params(spec, point)?;
        for idx in 0..spec.instances {
            let seed = spec.seed_base + idx as u64;
            let instance = params.generate(seed)?;
            for (_, algorithm) in &algorithms {
                let outcome = match run_algorithm(&instance, *algorithm, timeout) {
                    Ok((metrics, _)) => RunOutcome::Ok(metrics),
                    Err(Error::Timeout(_)) => RunOutcome::Timeout,
                    Err(err) => RunOutcome::Failed(err.to_string()),
                };
                rows.push(RunRow {
                    algorithm: algorithm.label().into(),
                    variant: algorithm.variant_label(),
                    k: algorithm.k_label(),
                    n: params.agents,
                    density: Some(params.density),
                    domain: params.domain,
                    tightness: params.tightness,
                    seed: Some(seed),
                    outcome,
                });
            }
        }
    }
    Ok(rows)
}

struct PointParams {
    family: SpecFamily,
    agents: usize,
    density: f64,
    domain: usize,
    tightness: Option<f64>,
    max_cost: u64,
}

impl PointParams {
    fn generate(&self, seed: u64) -> Result<AdcopInstance> {
        match self.family {
            SpecFamily::RandomAdcop => generate_random_adcop(
                self.agents,
                self.density,
                self.domain,
                self.max_cost,
                seed,
            ),
            SpecFamily::MaxDcsp => {
                let tightness = self.tightness.ok_or_else(|| {
                    Error::InvalidParameter("max_dcsp sweeps need a tightness".into())
                })?;
                generate_max_dcsp(self.agents, self.density, self.domain, tightness, seed)
            }
        }
    }
}

fn point_params(spec: &ExperimentSpec, point: f64) -> Result<PointParams> {
    let missing = |what: &str| Error::InvalidParameter(format!("spec is missing `{what}`"));
    let mut params = PointParams {
        family: spec.family,
        agents: spec.agents.unwrap_or(0),
        density: spec.density.unwrap_or(0.0),
        domain: spec.domain.ok_or_else(|| missing("domain"))?,
        tightness: spec.tightness,
        max_cost: spec.max_cost,
    };
    #[allow(clippy::cast_possible_truncation, clippy::cast_sign_loss)]
    match spec.sweep.parameter {
        SweepParameter::Agents => params.agents = point as usize,
        SweepParameter::Density => params.density = point,
        SweepParameter::Tightness => params.tightness = Some(point),
    }
    if params.agents == 0 {
        return Err(missing("agents"));
    }
    if params.density == 0.0 {
        return Err(missing("density"));
    }
    Ok(params)
}

/// Means per (algorithm, point) over successful runs.
pub fn aggregate_csv(spec: &ExperimentSpec, rows: &[RunRow]) -> String {
    let mut out = String::from(
        "algorithm,variant,k,point,runs,ok,mean_cost,mean_nclo,mean_msgs_total,mean_msgs_util,mean_msgs_cpa,mean_msgs_cost,mean_msgs_backtrack,mean_traffic,mean_privacy_loss\n",
    );
    let mut groups: Vec<(String, String, String, String)> = Vec::new();
    for row in rows {
        let point = match spec.sweep.parameter {
            SweepParameter::Agents => row.n.to_string(),
            SweepParameter::Density => opt_f64(row.density),
            SweepParameter::Tightness => opt_f64(row.tightness),
        };
        let key = (
            row.algorithm.clone(),
            row.variant.clone(),
            row.k.clone(),
            point,
        );
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (algorithm, variant, k, point) in groups {
        let members: Vec<&RunRow> = rows
            .iter()
            .filter(|r| {
                let row_point = match spec.sweep.parameter {
                    SweepParameter::Agents => r.n.to_string(),
                    SweepParameter::Density => opt_f64(r.density),
                    SweepParameter::Tightness => opt_f64(r.tightness),
                };
                r.algorithm == algorithm && r.variant == variant && r.k == k && row_point == point
            })
            .collect();
        let ok: Vec<&Metrics> = members
            .iter()
            .filter_map(|r| match &r.outcome {
                RunOutcome::Ok(m) => Some(m),
                _ => None,
            })
            .collect();
        let mean = |f: &dyn Fn(&Metrics) -> f64| -> f64 {
            if ok.is_empty() {
                0.0
            } else {
                ok.iter().map(|m| f(m)).sum::<f64>() / ok.len() as f64
            }
        };
        #[allow(clippy::cast_precision_loss)]
        let line = format!(
            "{algorithm},{variant},{k},{point},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.6}\n",
            members.len(),
            ok.len(),
            mean(&|m| m.solution_cost.value().unwrap_or(0) as f64),
            mean(&|m| m.nclo as f64),
            mean(&|m| m.msgs.total() as f64),
            mean(&|m| m.msgs.get(MsgKind::Util) as f64),
            mean(&|m| m.msgs.get(MsgKind::Cpa) as f64),
            mean(&|m| m.msgs.get(MsgKind::Cost) as f64),
            mean(&|m| m.msgs.get(MsgKind::Backtrack) as f64),
            mean(&|m| m.traffic as f64),
            mean(&|m| m.privacy_loss),
        );
        out.push_str(&line);
    }
    out
}

#[allow(unused_imports)]
use Cost as _Cost;
