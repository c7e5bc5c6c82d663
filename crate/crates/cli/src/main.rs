//! `shrinkfit` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input or configuration.

mod plotdata;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use shrinkfit::curves::shrinkage_curves;
use shrinkfit::evaluate::{run_coverage, uniform_grid, Design, SimConfig, SimResult};
use shrinkfit::io::{read_dataset, DatasetError};
use shrinkfit::{fit, random_effects, FitError, FitMethod, RandomEffectPosterior, ShrinkagePosterior};

const SCHEMA: u32 = 1;

#[derive(Parser)]
#[command(name = "shrinkfit", version, about = "Shrinkage estimation for the two-level Normal model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a dataset CSV (columns y, V, optional x1..xr, optional mu).
    Fit(FitArgs),
    /// Monte-Carlo coverage and calibrated-risk simulation.
    Simulate(SimArgs),
    /// Deterministic equal-variance shrinkage and variance curves.
    Curves(CurveArgs),
}

#[derive(Args)]
struct FitArgs {
    input: PathBuf,
    /// Repeatable; defaults to adm.
    #[arg(long = "method", value_parser = parse_method)]
    methods: Vec<FitMethod>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.96)]
    z: f64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Equal,
    TwoGroup,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Number of units; a comma list runs one simulation per value.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Number of covariates (intercept first) when no preset is given.
    #[arg(long, default_value_t = 0)]
    r: usize,
    /// Comma list of k variances, or one value for all units.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    variances: Vec<f64>,
    /// Comma list of true shrinkages, or start:end:step.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<FitMethod>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.96)]
    z: f64,
    /// Worker threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write long-format plotting tables.
    #[arg(long)]
    emit_plotdata: bool,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    r: usize,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Comma list of T values, or start:end:step.
    #[arg(long, default_value = "0:30:0.25")]
    t_grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<FitMethod, String> {
    s.parse::<FitMethod>().map_err(|e| e.to_string())
}

#[derive(Debug)]
enum CliError {
    /// Invalid data or configuration; the name is printed first.
    Invalid { name: String, message: String },
    Io(String),
}

impl CliError {
    fn invalid(name: &str, message: impl Into<String>) -> Self {
        CliError::Invalid {
            name: name.to_string(),
            message: message.into(),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        CliError::invalid(e.name(), e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::invalid(e.name(), e.to_string())
        }
    }
}

impl From<shrinkfit::evaluate::SimError> for CliError {
    fn from(e: shrinkfit::evaluate::SimError) -> Self {
        match e {
            shrinkfit::evaluate::SimError::Fit(f) => f.into(),
            other => CliError::invalid("InvalidConfig", other.to_string()),
        }
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct FitEntry {
    method: FitMethod,
    shrinkage: ShrinkagePosterior,
    random_effects: RandomEffectPosterior,
}

#[derive(Serialize)]
struct FitOutput {
    schema: u32,
    k: usize,
    r: usize,
    c: f64,
    z_star: f64,
    fits: Vec<FitEntry>,
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let file = fs::File::open(&args.input).map_err(|e| CliError::Io(format!("{}: {e}", args.input.display())))?;
    let ds = read_dataset(file)?;
    let (data, prior) = ds.to_model().map_err(FitError::from)?;
    let prior = shrinkfit::PriorSpec { c: args.c, ..prior };
    if !(args.z > 0.0) {
        return Err(CliError::invalid("InvalidZ", "--z must be positive"));
    }
    let methods = if args.methods.is_empty() { vec![FitMethod::Adm] } else { args.methods };
    let mut fits = Vec::new();
    for method in methods {
        let shrinkage = fit(&data, &prior, method)?;
        let random_effects = random_effects(&data, &prior, &shrinkage, args.z)?;
        fits.push(FitEntry {
            method,
            shrinkage,
            random_effects,
        });
    }
    let out = FitOutput {
        schema: SCHEMA,
        k: data.k(),
        r: data.r(),
        c: args.c,
        z_star: args.z,
        fits,
    };
    write_out(args.out.as_deref(), &to_json(&out))
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::invalid("InvalidGrid", format!("cannot parse grid `{s}`"));
    let nums = |p: &str| p.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    let v = match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (nums(a)?, nums(b)?, nums(step)?);
            if !(step > 0.0) || !(b >= a) {
                return Err(bad());
            }
            uniform_grid(a, b, step)
        }
        [_] => s.split(',').map(nums).collect::<Result<_, _>>()?,
        _ => return Err(bad()),
    };
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(bad());
    }
    Ok(v)
}

/// Intercept then powers of a centered index, for `r ≥ 2` explicit designs.
fn polynomial_design(k: usize, r: usize) -> Design {
    let mut values = Vec::with_capacity(k * r);
    for i in 0..k {
        let u = if k > 1 { 2.0 * i as f64 / (k - 1) as f64 - 1.0 } else { 0.0 };
        for j in 0..r {
            values.push(u.powi(j as i32));
        }
    }
    Design::Matrix { rows: k, cols: r, values }
}

#[derive(Serialize)]
struct SimOutput<'a> {
    schema: u32,
    result: &'a SimResult,
}

fn write_sim(dir: &Path, stem: &str, res: &SimResult) -> Result<(), CliError> {
    let csv = res.to_csv().map_err(|e| CliError::Io(e.to_string()))?;
    write_out(Some(&dir.join(format!("{stem}.csv"))), &csv)?;
    let json = to_json(&SimOutput { schema: SCHEMA, result: res });
    write_out(Some(&dir.join(format!("{stem}.json"))), &json)
}

fn cmd_simulate(args: SimArgs) -> Result<(), CliError> {
    let seed = match std::env::var("SHRINKFIT_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::invalid("InvalidConfig", format!("SHRINKFIT_SEED=`{s}` is not a 64-bit integer")))?,
        Err(_) => args.seed,
    };
    let grid = args.grid.as_deref().map(parse_list).transpose()?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::Io(format!("{}: {e}", args.out_dir.display())))?;

    let configure = |mut cfg: SimConfig| {
        cfg.seed = seed;
        cfg.c = args.c;
        cfg.z_star = args.z;
        if let Some(g) = &grid {
            cfg.grid = g.clone();
        }
        if let Some(r) = args.reps {
            cfg.reps = r;
        }
        if !args.methods.is_empty() {
            cfg.methods = args.methods.clone();
        }
        cfg
    };

    match args.preset {
        Some(Preset::TwoGroup) => {
            if !args.k.is_empty() || !args.variances.is_empty() {
                return Err(CliError::invalid("InvalidConfig", "the two-group preset fixes k and the variances"));
            }
            let cfg = configure(SimConfig::two_group());
            let res = shrinkfit::evaluate::run_two_group(&cfg, args.threads)?;
            write_sim(&args.out_dir, "two_group", &res)?;
            if args.emit_plotdata {
                plotdata::two_group(&args.out_dir, &res)?;
            }
        }
        preset => {
            let ks = if args.k.is_empty() {
                match preset {
                    Some(Preset::Equal) => vec![4, 10, 20],
                    _ => return Err(CliError::invalid("InvalidConfig", "--k is required without a preset")),
                }
            } else {
                args.k.clone()
            };
            let mut runs = Vec::new();
            for &k in &ks {
                let mut cfg = SimConfig::equal(k);
                if preset.is_none() {
                    cfg.v = match args.variances.as_slice() {
                        [] => vec![1.0; k],
                        [v] => vec![*v; k],
                        vs if vs.len() == k => vs.to_vec(),
                        _ => return Err(CliError::invalid("InvalidConfig", "--variances needs one or k values")),
                    };
                    cfg.design = match args.r {
                        0 => Design::None { known_mu: vec![0.0; k] },
                        1 => Design::Intercept,
                        r => polynomial_design(k, r),
                    };
                    cfg.beta_true = vec![0.0; args.r];
                } else if !args.variances.is_empty() || args.r != 0 {
                    return Err(CliError::invalid("InvalidConfig", "the equal preset fixes V = 1 and r = 0"));
                }
                let cfg = configure(cfg);
                let res = run_coverage(&cfg, args.threads)?;
                write_sim(&args.out_dir, &format!("coverage_k{k}"), &res)?;
                runs.push((k, res));
            }
            if args.emit_plotdata {
                plotdata::equal(&args.out_dir, &runs, args.c)?;
            }
        }
    }
    Ok(())
}

fn cmd_curves(args: CurveArgs) -> Result<(), CliError> {
    let t = parse_list(&args.t_grid)?;
    if t.iter().any(|&x| x < 0.0) {
        return Err(CliError::invalid("InvalidGrid", "T values must be nonnegative"));
    }
    if args.k <= args.r {
        return Err(CliError::invalid("InvalidConfig", "k must exceed r"));
    }
    let rows = shrinkage_curves(args.k, args.r, args.c, &t)?;
    let mut w = csv_writer();
    for row in &rows {
        w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    write_out(args.out.as_deref(), &finish_csv(w)?)
}

pub(crate) fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Curves(a) => cmd_curves(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Invalid { name, message }) => {
            if message.starts_with(&name) {
                eprintln!("error: {message}");
            } else {
                eprintln!("error: {name}: {message}");
            }
            ExitCode::from(2)
        }
        Err(CliError::Io(message)) => {
            eprintln!("error: IoError: {message}");
            ExitCode::from(1)
        }
    }
}
