//! The `ecf` command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::asymptotics::sigma_var;
use crate::distmodel::DistributionModel;
use crate::ecf::{ecf_curve, read_values, SortedSample};
use crate::error::EcfError;
use crate::numfmt::fmt_g;
use crate::simlab::{ks_table_csv, simulate_cov_grid, simulate_tn, tn_table_csv, Experiment, SimConfig, SimReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ecf", version, about = "Empirical cross-over function toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Write output to FILE instead of stdout
    #[arg(long, global = true, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Plain,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Population quantities of a model at level p
    Theory {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
    },
    /// ECF at every bucket of a data file ("-" for stdin)
    Curve {
        #[arg(default_value = "-")]
        input: String,
    },
    /// Two-cluster split of a data file, or of a curve saved as JSON
    Split {
        #[arg(required_unless_present = "from_curve")]
        input: Option<String>,
        /// Read `curve --format json` output instead of raw data
        #[arg(long, value_name = "FILE", conflicts_with = "input")]
        from_curve: Option<String>,
    },
    /// Mean and variance of T_n = sqrt(n)(G_n(p) - G(p))
    Simulate(SimArgs),
    /// KS test of T_n against N(0, sigma)
    Kstest(SimArgs),
    /// Empirical vs limit covariance of U_n on a grid
    Covgrid(SimArgs),
}

#[derive(Debug, Args)]
struct SimArgs {
    /// JSON config file; flags override its fields
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    /// Sample sizes, comma separated
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Levels for covgrid, comma separated
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<EcfError> for Failure {
    fn from(e: EcfError) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERIC } else { EXIT_USAGE };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    configure_threads();

    let text = match dispatch(&cli, stdin) {
        Ok(text) => text,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            return f.code;
        }
    };
    let written = match &cli.output {
        Some(path) => std::fs::write(path, text.as_bytes()).map_err(|e| format!("{}: {e}", path.display())),
        None => stdout.write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
    }
}

fn configure_threads() {
    if let Some(threads) = std::env::var("ECF_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // A global pool can only be installed once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
}

fn dispatch(cli: &Cli, stdin: &mut dyn BufRead) -> CliResult<String> {
    match &cli.command {
        Command::Theory { model, p } => theory(model, *p, cli.format.unwrap_or(Format::Plain)),
        Command::Curve { input } => curve(input, stdin, cli.format.unwrap_or(Format::Csv)),
        Command::Split { input, from_curve } => {
            let out = match (input, from_curve) {
                (_, Some(path)) => split_from_curve(path, stdin)?,
                (Some(path), None) => split_from_data(path, stdin)?,
                (None, None) => return Err(Failure::usage("split needs an input file or --from-curve")),
            };
            Ok(render_split(&out, cli.format.unwrap_or(Format::Plain)))
        }
        Command::Simulate(args) => tn_runs(args, Experiment::TnSummary, cli.format.unwrap_or(Format::Plain)),
        Command::Kstest(args) => tn_runs(args, Experiment::KsNormality, cli.format.unwrap_or(Format::Plain)),
        Command::Covgrid(args) => covgrid(args, cli.format.unwrap_or(Format::Plain)),
    }
}

fn parse_model(spec: &str) -> CliResult<DistributionModel> {
    spec.parse().map_err(|e: EcfError| Failure::usage(e.to_string()))
}

fn check_level(p: f64) -> CliResult<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("--p must lie in (0,1), got {p}")))
    }
}

fn open_input<'a>(path: &str, stdin: &'a mut dyn BufRead) -> CliResult<Box<dyn BufRead + 'a>> {
    if path == "-" {
        Ok(Box::new(stdin))
    } else {
        let file = File::open(path).map_err(|e| Failure::usage(format!("{path}: {e}")))?;
        Ok(Box::new(BufReader::new(file)))
    }
}

fn load_sample(path: &str, stdin: &mut dyn BufRead) -> CliResult<SortedSample> {
    let values = read_values(open_input(path, stdin)?)?;
    Ok(SortedSample::new(values)?)
}

fn key_values(pairs: &[(&str, String)], format: Format) -> String {
    match format {
        Format::Plain => pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect(),
        Format::Csv => {
            let header: Vec<&str> = pairs.iter().map(|(k, _)| *k).collect();
            let row: Vec<String> = pairs.iter().map(|(_, v)| csv_field(v)).collect();
            format!("{}\n{}\n", header.join(","), row.join(","))
        }
        Format::Json => unreachable!("json output is serialized from typed structs"),
    }
}

fn csv_field(v: &str) -> String {
    if v.contains(',') || v.contains('"') {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

#[derive(Debug, Serialize)]
struct TheoryOutput {
    model: String,
    p: f64,
    quantile: f64,
    #[serde(rename = "G")]
    g: f64,
    #[serde(rename = "B")]
    b: f64,
    mu_l: f64,
    mu_u: f64,
    g_prime: f64,
    sigma: f64,
}

fn theory(model: &str, p: f64, format: Format) -> CliResult<String> {
    let m = parse_model(model)?;
    check_level(p)?;
    let out = TheoryOutput {
        model: m.to_string(),
        p,
        quantile: m.quantile(p)?,
        g: m.crossover_g(p)?,
        b: m.split_b(p)?,
        mu_l: m.mu_lower(p)?,
        mu_u: m.mu_upper(p)?,
        g_prime: m.g_prime(p)?,
        sigma: sigma_var(&m, p)?,
    };
    Ok(match format {
        Format::Json => to_json(&out),
        _ => key_values(
            &[
                ("model", out.model.clone()),
                ("p", fmt_g(out.p)),
                ("quantile", fmt_g(out.quantile)),
                ("G", fmt_g(out.g)),
                ("B", fmt_g(out.b)),
                ("mu_l", fmt_g(out.mu_l)),
                ("mu_u", fmt_g(out.mu_u)),
                ("g_prime", fmt_g(out.g_prime)),
                ("sigma", fmt_g(out.sigma)),
            ],
            format,
        ),
    })
}

/// JSON form of `curve`, also accepted by `split --from-curve`.
#[derive(Debug, Serialize, Deserialize)]
struct CurveOutput {
    n: usize,
    crossing_k: usize,
    p_hat: f64,
    split_value: f64,
    g: Vec<f64>,
}

fn curve(input: &str, stdin: &mut dyn BufRead, format: Format) -> CliResult<String> {
    let sample = load_sample(input, stdin)?;
    let c = ecf_curve(&sample);
    let out = CurveOutput {
        n: c.n,
        crossing_k: c.crossing_k,
        p_hat: c.p_hat,
        split_value: sample.order_stat(c.crossing_k),
        g: c.g,
    };
    if format == Format::Json {
        return Ok(to_json(&out));
    }
    let mut text = String::from("k,p,g\n");
    for (i, g) in out.g.iter().enumerate() {
        let k = i + 1;
        text.push_str(&format!("{k},{},{}\n", fmt_g(k as f64 / out.n as f64), fmt_g(*g)));
    }
    text.push_str(&format!(
        "# crossing_k={},p_hat={},split_value={}\n",
        out.crossing_k,
        fmt_g(out.p_hat),
        fmt_g(out.split_value)
    ));
    Ok(text)
}

#[derive(Debug, PartialEq, Serialize)]
struct SplitOutput {
    k_star: usize,
    p_n: f64,
    split_value: f64,
    left_size: usize,
    right_size: usize,
}

fn split_from_data(path: &str, stdin: &mut dyn BufRead) -> CliResult<SplitOutput> {
    let sample = load_sample(path, stdin)?;
    let s = crate::ecf::two_cluster_split(&sample);
    Ok(SplitOutput {
        k_star: s.k_star,
        p_n: s.k_star as f64 / sample.len() as f64,
        split_value: s.split_value,
        left_size: s.left.len(),
        right_size: s.right.len(),
    })
}

fn split_from_curve(path: &str, stdin: &mut dyn BufRead) -> CliResult<SplitOutput> {
    let reader = open_input(path, stdin)?;
    let c: CurveOutput =
        serde_json::from_reader(reader).map_err(|e| Failure::usage(format!("{path}: not a curve JSON: {e}")))?;
    if c.crossing_k == 0 || c.crossing_k >= c.n {
        return Err(Failure::usage(format!("{path}: crossing_k out of range")));
    }
    Ok(SplitOutput {
        k_star: c.crossing_k,
        p_n: c.p_hat,
        split_value: c.split_value,
        left_size: c.crossing_k,
        right_size: c.n - c.crossing_k,
    })
}

fn render_split(out: &SplitOutput, format: Format) -> String {
    match format {
        Format::Json => to_json(out),
        _ => key_values(
            &[
                ("k_star", out.k_star.to_string()),
                ("p_n", fmt_g(out.p_n)),
                ("split_value", fmt_g(out.split_value)),
                ("left_size", out.left_size.to_string()),
                ("right_size", out.right_size.to_string()),
            ],
            format,
        ),
    }
}

#[derive(Debug, Default, Deserialize)]
struct ConfigFile {
    model: Option<String>,
    p: Option<f64>,
    n: Option<usize>,
    replicates: Option<usize>,
    seed: Option<u64>,
    grid: Option<Vec<f64>>,
    experiment: Option<Experiment>,
}

struct Resolved {
    model: DistributionModel,
    p: f64,
    sizes: Vec<usize>,
    replicates: usize,
    seed: u64,
    grid: Vec<f64>,
}

fn resolve(args: &SimArgs, default_replicates: usize) -> CliResult<Resolved> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<ConfigFile>(&text)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    let model_spec = args
        .model
        .clone()
        .or(file.model)
        .ok_or_else(|| Failure::usage("--model is required"))?;
    let model = parse_model(&model_spec)?;
    let p = args.p.or(file.p).unwrap_or(0.5);
    check_level(p)?;
    let sizes = if args.n.is_empty() {
        vec![file.n.unwrap_or(1000)]
    } else {
        args.n.clone()
    };
    let grid = if !args.grid.is_empty() {
        args.grid.clone()
    } else if let Some(g) = file.grid {
        g
    } else if let Some(Experiment::CovGrid(g)) = file.experiment {
        g
    } else {
        vec![0.3, 0.5, 0.7]
    };
    Ok(Resolved {
        model,
        p,
        sizes,
        replicates: args.replicates.or(file.replicates).unwrap_or(default_replicates),
        seed: args.seed.or(file.seed).unwrap_or(1),
        grid,
    })
}

fn validated(config: SimConfig) -> CliResult<SimConfig> {
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(config)
}

fn tn_runs(args: &SimArgs, experiment: Experiment, format: Format) -> CliResult<String> {
    let default_replicates = if experiment == Experiment::KsNormality { 100 } else { 1000 };
    let r = resolve(args, default_replicates)?;
    let configs = r
        .sizes
        .iter()
        .map(|&n| {
            validated(SimConfig {
                model: r.model.clone(),
                p: r.p,
                n,
                replicates: r.replicates,
                seed: r.seed,
                experiment: experiment.clone(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let reports = configs
        .iter()
        .map(simulate_tn)
        .collect::<Result<Vec<SimReport>, _>>()?;
    let ks = experiment == Experiment::KsNormality;
    Ok(match format {
        Format::Json => to_json(&reports),
        Format::Csv if ks => ks_table_csv(&reports),
        Format::Csv => tn_table_csv(&reports),
        Format::Plain => reports
            .iter()
            .map(|rep| {
                let mut line = format!(
                    "model={} p={} n={} replicates={} seed={} mean={} variance={} theoretical_sigma={}",
                    rep.model,
                    fmt_g(rep.p),
                    rep.n,
                    rep.replicates,
                    rep.seed,
                    fmt_g(rep.mean),
                    fmt_g(rep.variance),
                    fmt_g(rep.theoretical_sigma)
                );
                if let (Some(d), Some(pv)) = (rep.ks_statistic, rep.ks_pvalue) {
                    line.push_str(&format!(" ks_statistic={} ks_pvalue={}", fmt_g(d), fmt_g(pv)));
                }
                line.push('\n');
                line
            })
            .collect(),
    })
}

fn covgrid(args: &SimArgs, format: Format) -> CliResult<String> {
    let r = resolve(args, 1000)?;
    let mut out = String::new();
    let mut reports = Vec::new();
    for &n in &r.sizes {
        let config = validated(SimConfig {
            model: r.model.clone(),
            p: r.p,
            n,
            replicates: r.replicates,
            seed: r.seed,
            experiment: Experiment::CovGrid(r.grid.clone()),
        })?;
        reports.push(simulate_cov_grid(&config)?);
    }
    match format {
        Format::Json => return Ok(to_json(&reports)),
        Format::Csv => {
            out.push_str("model,n,i,j,p_i,p_j,empirical,theoretical,abs_error\n");
            for rep in &reports {
                for (i, &pi) in rep.grid.iter().enumerate() {
                    for (j, &pj) in rep.grid.iter().enumerate() {
                        let (e, t) = (rep.empirical[i][j], rep.theoretical.matrix[i][j]);
                        out.push_str(&format!(
                            "\"{}\",{},{i},{j},{},{},{},{},{}\n",
                            rep.model,
                            rep.n,
                            fmt_g(pi),
                            fmt_g(pj),
                            fmt_g(e),
                            fmt_g(t),
                            fmt_g((e - t).abs())
                        ));
                    }
                }
            }
        }
        Format::Plain => {
            for rep in &reports {
                out.push_str(&format!(
                    "model={} n={} replicates={} seed={} max_abs_error={}\n",
                    rep.model,
                    rep.n,
                    rep.replicates,
                    rep.seed,
                    fmt_g(rep.max_abs_error)
                ));
                for (label, m) in [("empirical", &rep.empirical), ("theoretical", &rep.theoretical.matrix)] {
                    out.push_str(&format!("{label}:\n"));
                    for row in m.iter() {
                        let cells: Vec<String> = row.iter().map(|&v| fmt_g(v)).collect();
                        out.push_str(&format!("  {}\n", cells.join(" ")));
                    }
                }
            }
        }
    }
    Ok(out)
}
