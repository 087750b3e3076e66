mod error;
mod input;
mod output;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clusterwise::em::{e_step, multi_start_fit, EmConfig, VarianceMode, DEFAULT_SEED};
use clusterwise::model::{log_likelihood, map_partition, MixtureParams};
use clusterwise::selection::{select_num_components, BicVariant, CoefCount, Estimator, SelectionConfig};
use clusterwise::simulation::{
    aggregate, run_study, scenario, scenarios, summarize, write_aggregate_csv, write_replications_csv, SimDesign,
    StudyConfig, StudyMode, DEFAULT_REPLICATIONS, DEFAULT_STUDY_SEED,
};
use clusterwise::tuning::{default_k, tune_c_cv, tune_c_kdeleted, CGrid, CvConfig, KChoice, TuningResult};

use error::CliError;
use input::{load_csv, Table};
use output::{Columns, EvalOutput, FitOutput, ParamsIn, SelectOutput, TuneOutput};

/// Clusterwise linear regression with constrained variances.
#[derive(Debug, Parser)]
#[command(name = "cwreg", version)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a mixture with a fixed number of components.
    Fit(FitArgs),
    /// Tune the scale balance c and report the criterion curve.
    Tune(TuneArgs),
    /// Choose the number of components by BIC.
    Select(SelectArgs),
    /// Run the Monte Carlo comparison study.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Hom,
    Het,
    Conc,
    Conk,
}

impl Method {
    fn is_constrained(self) -> bool {
        matches!(self, Method::Conc | Method::Conk)
    }

    fn name(self) -> &'static str {
        match self {
            Method::Hom => "hom",
            Method::Het => "het",
            Method::Conc => "conc",
            Method::Conk => "conk",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BicArg {
    Standard,
    Constrained,
    Modified,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CoefArg {
    Pergroup,
    Literal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Fixed,
    Select,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file with a header row.
    input: PathBuf,
    /// Response column; defaults to the first column.
    #[arg(long)]
    response: Option<String>,
    /// Do not prepend an intercept column.
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Debug, Args)]
struct EstArgs {
    /// Random starts per fit.
    #[arg(long, default_value_t = 10)]
    starts: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Candidate c values: `a,b,...` or `geom:LO:COUNT`.
    #[arg(long)]
    grid: Option<String>,
    /// Number of cross-validation partitions (default n/5).
    #[arg(long)]
    cv_m: Option<usize>,
    /// Test-set size per partition (default n/10).
    #[arg(long)]
    cv_test: Option<usize>,
    /// Deleted terms: 1, 2, jg, n10, n5, n2, n125, n111, or an integer.
    #[arg(long, default_value = "n5")]
    k: String,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Convergence tolerance on the per-observation log-likelihood change.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, required_unless_present = "params_in")]
    method: Option<Method>,
    #[arg(long, required_unless_present = "params_in")]
    g: Option<usize>,
    #[command(flatten)]
    est: EstArgs,
    /// Include the posterior matrix.
    #[arg(long)]
    posteriors: bool,
    /// Evaluate parameters from a previous `fit` output instead of fitting.
    #[arg(long)]
    params_in: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    g: usize,
    #[command(flatten)]
    est: EstArgs,
    /// Report wall time of the tuning run.
    #[arg(long)]
    record_time: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    method: Method,
    /// Inclusive range of component counts, `A..B`.
    #[arg(long, default_value = "1..5")]
    g_range: String,
    /// Selection criterion; constrained methods default to `modified`.
    #[arg(long, value_enum)]
    bic: Option<BicArg>,
    #[arg(long, value_enum, default_value = "pergroup")]
    bic_coef_count: CoefArg,
    #[command(flatten)]
    est: EstArgs,
    #[arg(long)]
    record_time: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Print the built-in designs and exit.
    #[arg(long)]
    list_scenarios: bool,
    /// Design name; all designs when omitted.
    #[arg(long)]
    scenario: Option<String>,
    /// Sample size; both standard sizes when omitted.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    reps: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "hom,het,conc,conk")]
    methods: Vec<Method>,
    #[arg(long, value_enum, default_value = "fixed")]
    mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    starts: usize,
    #[arg(long, default_value_t = DEFAULT_STUDY_SEED)]
    seed: u64,
    /// k choice for `conk`.
    #[arg(long, default_value = "n5")]
    k: String,
    #[arg(long)]
    grid: Option<String>,
    /// Record per-replication wall time (output then varies between runs).
    #[arg(long)]
    record_time: bool,
    /// Directory for replications.csv and aggregate.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(spec: Option<&str>) -> Result<CGrid, CliError> {
    let Some(spec) = spec else { return Ok(CGrid::default()) };
    if let Some(rest) = spec.strip_prefix("geom:") {
        let (lo, count) = rest
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("grid {spec:?}: expected geom:LO:COUNT")))?;
        let lo: f64 = lo.parse().map_err(|_| CliError::Usage(format!("grid lower end {lo:?}")))?;
        let count: usize = count.parse().map_err(|_| CliError::Usage(format!("grid count {count:?}")))?;
        return Ok(CGrid::geometric(lo, count)?);
    }
    let values = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("grid value {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CGrid::new(values)?)
}

enum KSpec {
    Choice(KChoice),
    Fixed(usize),
}

fn parse_k(s: &str) -> Result<KSpec, CliError> {
    if let Some(c) = KChoice::from_token(s) {
        return Ok(KSpec::Choice(c));
    }
    s.parse().map(KSpec::Fixed).map_err(|_| CliError::Usage(format!("k {s:?}")))
}

fn resolve_k(spec: &KSpec, table: &Table, g: usize) -> Result<usize, CliError> {
    let n = table.data.n();
    let k = match *spec {
        KSpec::Choice(c) => default_k(n, table.data.p(), g, c),
        KSpec::Fixed(k) => k,
    };
    if k >= n {
        return Err(CliError::Usage(format!("k = {k} must be below n = {n}")));
    }
    Ok(k)
}

fn parse_g_range(s: &str) -> Result<std::ops::RangeInclusive<usize>, CliError> {
    let err = || CliError::Usage(format!("g range {s:?}: expected A..B with 1 <= A <= B"));
    let (a, b) = s.split_once("..").ok_or_else(err)?;
    let a: usize = a.trim().parse().map_err(|_| err())?;
    let b: usize = b.trim().parse().map_err(|_| err())?;
    if a == 0 || a > b {
        return Err(err());
    }
    Ok(a..=b)
}

fn em_config(est: &EstArgs) -> Result<EmConfig, CliError> {
    let mut cfg = EmConfig::default().with_seed(est.seed).with_starts(est.starts);
    if let Some(m) = est.max_iter {
        cfg.max_iter = m;
    }
    if let Some(t) = est.tol {
        cfg.rel_tol = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cv_config(est: &EstArgs, table: &Table, g: usize) -> CvConfig {
    let n = table.data.n();
    let mut cv = CvConfig::for_data(n, g, table.data.p(), est.seed);
    if let Some(m) = est.cv_m {
        cv.m_partitions = m;
    }
    if let Some(t) = est.cv_test {
        cv.test_size = t;
    }
    cv
}

fn load(data: &DataArgs) -> Result<Table, CliError> {
    load_csv(&data.input, data.response.as_deref(), !data.no_intercept)
}

fn columns(table: &Table) -> Columns<'_> {
    let mut regressors = Vec::new();
    if table.data.has_intercept() {
        regressors.push("(intercept)".to_owned());
    }
    regressors.extend(table.regressors.iter().cloned());
    Columns { response: &table.response, regressors }
}

fn emit<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn tune(method: Method, table: &Table, g: usize, est: &EstArgs, cfg: &EmConfig) -> Result<(TuningResult, Option<usize>), CliError> {
    let grid = parse_grid(est.grid.as_deref())?;
    match method {
        Method::Conc => Ok((tune_c_cv(&table.data, g, &grid, &cv_config(est, table, g), cfg)?, None)),
        Method::Conk => {
            let k = resolve_k(&parse_k(&est.k)?, table, g)?;
            Ok((tune_c_kdeleted(&table.data, g, &grid, k, cfg)?, Some(k)))
        }
        _ => Err(CliError::Usage(format!("method {} has no scale balance to tune", method.name()))),
    }
}

fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let table = load(&args.data)?;
    if let Some(path) = &args.params_in {
        let p: ParamsIn = serde_json::from_str(&fs::read_to_string(path)?)?;
        let params = MixtureParams::new(p.weights, p.coefficients, p.variances)?;
        let post = e_step(&table.data, &params)?;
        let out = EvalOutput {
            n: table.data.n(),
            loglik: log_likelihood(&table.data, &params)?,
            labels: map_partition(&post),
            posteriors: args
                .posteriors
                .then(|| (0..post.n()).map(|i| post.row(i).to_vec()).collect()),
        };
        return emit(&out, args.out.as_deref());
    }
    let (method, g) = (args.method.expect("required by clap"), args.g.expect("required by clap"));
    let cfg = em_config(&args.est)?;
    let (fit, k) = match method {
        Method::Hom => (multi_start_fit(&table.data, g, VarianceMode::Homoscedastic, &cfg)?.best, None),
        Method::Het => (multi_start_fit(&table.data, g, VarianceMode::Heteroscedastic, &cfg)?.best, None),
        Method::Conc | Method::Conk => {
            let (r, k) = tune(method, &table, g, &args.est, &cfg)?;
            (r.fit, k)
        }
    };
    if fit.degenerate {
        eprintln!("warning: best fit is degenerate");
    }
    if fit.diagnostics.empty_component {
        eprintln!("warning: a component emptied on every restart");
    }
    let out = FitOutput::new(method.name(), &fit, &columns(&table), k, args.posteriors);
    emit(&out, args.out.as_deref())
}

fn cmd_tune(args: &TuneArgs) -> Result<(), CliError> {
    let table = load(&args.data)?;
    let cfg = em_config(&args.est)?;
    let start = Instant::now();
    let (r, k) = tune(args.method, &table, args.g, &args.est, &cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    let cv = (args.method == Method::Conc).then(|| cv_config(&args.est, &table, args.g));
    let out = TuneOutput {
        method: args.method.name().to_owned(),
        g: args.g,
        k,
        cv_partitions: cv.as_ref().map(|c| c.m_partitions),
        cv_test_size: cv.as_ref().map(|c| c.test_size),
        target: r.target,
        chosen_c: r.chosen_c,
        curve: TuneOutput::curve(&r),
        fit: FitOutput::new(args.method.name(), &r.fit, &columns(&table), k, false),
        time_s: args.record_time.then_some(elapsed),
    };
    emit(&out, args.out.as_deref())
}

fn cmd_select(args: &SelectArgs) -> Result<(), CliError> {
    let table = load(&args.data)?;
    let range = parse_g_range(&args.g_range)?;
    let cfg = em_config(&args.est)?;
    let bic = args.bic.unwrap_or(if args.method.is_constrained() { BicArg::Modified } else { BicArg::Standard });
    let variant = match (args.method.is_constrained(), bic) {
        (false, BicArg::Standard) => BicVariant::Standard,
        (false, _) => {
            return Err(CliError::Usage(format!("--bic {bic:?} needs a constrained method").to_lowercase()));
        }
        (true, BicArg::Standard | BicArg::Constrained) => BicVariant::ConstrainedStandard,
        (true, BicArg::Modified) => BicVariant::ConstrainedModified,
    };
    let estimator = match args.method {
        Method::Hom => Estimator::HomN,
        Method::Het => Estimator::HetN,
        Method::Conc => Estimator::ConC,
        Method::Conk => match parse_k(&args.est.k)? {
            KSpec::Choice(c) => Estimator::ConK(c),
            KSpec::Fixed(_) => {
                return Err(CliError::Usage("select needs a symbolic k (1, 2, jg, n10, n5, n2, n125, n111)".into()));
            }
        },
    };
    let coef_count = match args.bic_coef_count {
        CoefArg::Pergroup => CoefCount::PerGroup,
        CoefArg::Literal => CoefCount::Literal,
    };
    let cv = match (args.est.cv_m, args.est.cv_test) {
        (None, None) => None,
        _ => Some(cv_config(&args.est, &table, *range.start())),
    };
    let scfg = SelectionConfig { em: cfg, grid: parse_grid(args.est.grid.as_deref())?, cv, variant, coef_count };
    let start = Instant::now();
    let r = select_num_components(&table.data, range, estimator, &scfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    for (g, reason) in &r.failed {
        eprintln!("warning: G = {g} skipped: {reason}");
    }
    let criterion = match variant {
        BicVariant::Standard => "standard",
        BicVariant::ConstrainedStandard => "constrained",
        BicVariant::ConstrainedModified => "modified",
    };
    let coef_name = match coef_count {
        CoefCount::PerGroup => "pergroup",
        CoefCount::Literal => "literal",
    };
    let mut out = SelectOutput::new(args.method.name(), criterion, coef_name, &r);
    out.time_s = args.record_time.then_some(elapsed);
    emit(&out, args.out.as_deref())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    if args.list_scenarios {
        let mut stdout = io::stdout().lock();
        for d in scenarios() {
            let props: Vec<String> = d.proportions.iter().map(f64::to_string).collect();
            let icpt: Vec<String> = d.intercepts.iter().map(f64::to_string).collect();
            writeln!(stdout, "{}\t{}\tn={}\tproportions={}\tintercepts={}", d.id(), d.name, d.n, props.join(","), icpt.join(","))?;
        }
        return Ok(());
    }
    let mut designs: Vec<SimDesign> = match (&args.scenario, args.n) {
        (Some(name), Some(n)) => vec![scenario(name, n)?],
        (Some(name), None) => clusterwise::simulation::SCENARIO_SIZES
            .iter()
            .map(|&n| scenario(name, n))
            .collect::<Result<_, _>>()?,
        (None, Some(n)) => scenarios().into_iter().filter(|d| d.n == n).collect(),
        (None, None) => scenarios(),
    };
    if designs.is_empty() {
        return Err(CliError::Usage("no design matches the given --n".into()));
    }
    for d in &mut designs {
        d.replications = args.reps;
        d.n_starts = args.starts;
        d.seed = args.seed;
    }
    let k = match parse_k(&args.k)? {
        KSpec::Choice(c) => c,
        KSpec::Fixed(_) => return Err(CliError::Usage("simulate needs a symbolic k".into())),
    };
    let methods = args
        .methods
        .iter()
        .map(|m| match m {
            Method::Hom => Estimator::HomN,
            Method::Het => Estimator::HetN,
            Method::Conc => Estimator::ConC,
            Method::Conk => Estimator::ConK(k),
        })
        .collect();
    let mode = match args.mode {
        ModeArg::Fixed => StudyMode::FixedG,
        ModeArg::Select => StudyMode::SelectG,
    };
    let mut cfg = StudyConfig::new(methods, mode);
    cfg.grid = parse_grid(args.grid.as_deref())?;
    cfg.record_time = args.record_time;
    let result = run_study(&designs, &cfg)?;
    for r in result.failures() {
        eprintln!(
            "warning: {} rep {} {}: {}",
            r.scenario,
            r.rep,
            r.method,
            r.error.as_deref().unwrap_or_default()
        );
    }
    let aggs = aggregate(&result.records);
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_replications_csv(&result.records, io::BufWriter::new(fs::File::create(dir.join("replications.csv"))?))?;
            write_aggregate_csv(&aggs, io::BufWriter::new(fs::File::create(dir.join("aggregate.csv"))?))?;
            io::stdout().lock().write_all(summarize(&aggs).as_bytes())?;
        }
        None => write_replications_csv(&result.records, io::stdout().lock())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Select(a) => cmd_select(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
