//! The `vr` command-line front end.
//!
//! Every command prints a flat record or a table in text, JSON or CSV.
//! Errors go to stderr as a single `error[CODE]: message` line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::accountant::{compose_rounds, CompositionPlan};
use crate::bounds::{
    analytic_bound, asymptotic_bound, lower_bound, oracle_upper_bound, upper_bound, BoundRequest, BoundResult,
    ClosedForm, LowerMode, LowerRequest, DEFAULT_ITERS,
};
use crate::divergence::{DivergenceOptions, BRUTE_FORCE_MAX_N, DEFAULT_TRUNC_DELTA};
use crate::error::Error;
use crate::params::{
    catalog, derive_lower_params, derive_variation_ratio, AsymmetricParams, Mechanism, MechanismArgs, MechanismSpec,
    VariationRatioParams,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNSUPPORTED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "vr", version, about = "Privacy amplification bounds for the shuffle model")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON file with default values for flags not given on the command line.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Size of the worker pool.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Binomial tail mass skipped (and charged) in divergence sums.
    #[arg(long, global = true)]
    pub trunc_delta: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the variation-ratio parameters of a mechanism.
    Params(ParamsCmd),
    /// Numerical upper bound by binary search.
    Upper(BoundCmd),
    /// Lower bound from the asymmetric pair.
    Lower(LowerCmd),
    /// Closed-form upper bounds.
    ClosedForm(ClosedFormCmd),
    /// Compose K rounds with the Fourier accountant.
    Compose(ComposeCmd),
    /// Sweep one parameter and write a CSV table.
    Sweep(SweepCmd),
    /// Upper bound by full enumeration, for small populations.
    Oracle(OracleCmd),
}

/// Flags of the catalog rows.
#[derive(Args, Debug, Default, Clone)]
pub struct MechFlags {
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub d: Option<u64>,
    /// Subset size of k-subset and subset-exp.
    #[arg(long = "subset-k")]
    pub subset_k: Option<u64>,
    #[arg(long)]
    pub l: Option<u64>,
    #[arg(long = "big-k")]
    pub big_k: Option<u64>,
    #[arg(long)]
    pub s: Option<u64>,
    #[arg(long)]
    pub len: Option<f64>,
    #[arg(long)]
    pub eps1: Option<f64>,
    #[arg(long)]
    pub eps2: Option<f64>,
    #[arg(long)]
    pub d01: Option<f64>,
    #[arg(long)]
    pub dmax: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long = "big-f")]
    pub big_f: Option<f64>,
    #[arg(long)]
    pub coin: Option<f64>,
    #[arg(long)]
    pub f: Option<f64>,
}

impl MechFlags {
    fn to_args(&self) -> MechanismArgs {
        MechanismArgs {
            eps0: self.eps0,
            d: self.d,
            k: self.subset_k,
            l: self.l,
            big_k: self.big_k,
            s: self.s,
            len: self.len,
            eps1: self.eps1,
            eps2: self.eps2,
            d01: self.d01,
            dmax: self.dmax,
            b: self.b,
            m: self.m,
            big_f: self.big_f,
            coin: self.coin,
            f: self.f,
        }
    }
}

/// Where the parameters come from: a catalog row, raw values or a matrix.
#[derive(Args, Debug, Default, Clone)]
pub struct Source {
    #[arg(long)]
    pub mechanism: Option<String>,
    #[command(flatten)]
    pub mech: MechFlags,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    /// JSON file `{"rows": [[...]], "blanket_rows": [[...]]}`.
    #[arg(long)]
    pub matrix_file: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct Population {
    /// Number of users.
    #[arg(long)]
    pub n: Option<u64>,
    /// Messages per user; blanket count becomes n * (messages - 1).
    #[arg(long)]
    pub messages: Option<u64>,
    /// Blanket count, overriding --n and --messages.
    #[arg(long)]
    pub n_blanket: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ParamsCmd {
    /// Catalog id, same as --mechanism.
    pub id: Option<String>,
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub pop: Population,
}

#[derive(Args, Debug)]
pub struct BoundCmd {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub pop: Population,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub iters: Option<u32>,
}

#[derive(Args, Debug)]
pub struct LowerCmd {
    #[command(flatten)]
    pub bound: BoundCmd,
    #[arg(long)]
    pub q0: Option<f64>,
    #[arg(long)]
    pub q1: Option<f64>,
    /// Report the satisfying end of the final bracket.
    #[arg(long)]
    pub tight_upper: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClosedFormKind {
    Analytic,
    Asymptotic,
}

#[derive(Args, Debug)]
pub struct ClosedFormCmd {
    #[arg(value_enum)]
    pub kind: ClosedFormKind,
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub pop: Population,
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ComposeCmd {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub pop: Population,
    /// Number of rounds.
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub eps_error: Option<f64>,
    #[arg(long)]
    pub delta_error: Option<f64>,
    /// Subsampling rate per round.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Report the smallest eps at this delta instead of the whole curve.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub mesh: Option<f64>,
    /// Convolve K separate transforms instead of one power.
    #[arg(long)]
    pub generic: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Vary {
    Eps0,
    N,
    Beta,
}

#[derive(Args, Debug)]
pub struct SweepCmd {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub pop: Population,
    #[arg(long, value_enum)]
    pub vary: Vary,
    /// `start:end:points`, inclusive.
    #[arg(long)]
    pub range: String,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub iters: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OracleCmd {
    #[command(flatten)]
    pub bound: BoundCmd,
    /// Largest blanket count accepted.
    #[arg(long)]
    pub max_n: Option<u64>,
}

/// Defaults read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub format: Option<Format>,
    pub threads: Option<usize>,
    pub trunc_delta: Option<f64>,
    pub delta: Option<f64>,
    pub iters: Option<u32>,
    pub n: Option<u64>,
    pub k: Option<u32>,
    pub eps_error: Option<f64>,
    pub delta_error: Option<f64>,
    pub max_n: Option<u64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::domain(format!("config {}: {e}", path.display())))
    }
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Domain(_) | Error::UnboundedRatio(_) => EXIT_USAGE,
        Error::UnsupportedRegime(_) | Error::Size(_) | Error::Range(_) => EXIT_UNSUPPORTED,
        Error::Io(_) => EXIT_IO,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let msg = e.kind().as_str().unwrap_or("invalid arguments");
            let detail = e.to_string();
            let line = detail.lines().next().unwrap_or(msg).trim_start_matches("error: ");
            let _ = writeln!(err, "error[E_USAGE]: {line}");
            return EXIT_USAGE;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let mut msg = e.to_string().replace('\n', " ");
            if matches!(e, Error::UnsupportedRegime(_)) {
                msg.push_str(" (try `vr oracle`)");
            }
            let _ = writeln!(err, "error[{}]: {msg}", e.code());
            exit_code(&e)
        }
    }
}

struct Ctx {
    format: Format,
    config: Config,
    opts: DivergenceOptions,
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Error> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(threads) = cli.threads.or(config.threads) {
        if threads == 0 {
            return Err(Error::domain("--threads must be positive"));
        }
        // A second call in the same process (tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let trunc_delta = cli.trunc_delta.or(config.trunc_delta).unwrap_or(DEFAULT_TRUNC_DELTA);
    if !(trunc_delta >= 0.0 && trunc_delta < 1.0) {
        return Err(Error::domain("--trunc-delta must be in [0, 1)"));
    }
    let ctx = Ctx {
        format: cli.format.or(config.format).unwrap_or(Format::Text),
        config,
        opts: DivergenceOptions { trunc_delta },
    };
    let output = match &cli.command {
        Command::Params(cmd) => cmd_params(&ctx, cmd)?,
        Command::Upper(cmd) => cmd_upper(&ctx, cmd)?,
        Command::Lower(cmd) => cmd_lower(&ctx, cmd)?,
        Command::ClosedForm(cmd) => cmd_closed_form(&ctx, cmd)?,
        Command::Compose(cmd) => cmd_compose(&ctx, cmd)?,
        Command::Sweep(cmd) => return cmd_sweep(&ctx, cmd, out),
        Command::Oracle(cmd) => cmd_oracle(&ctx, cmd)?,
    };
    let text = output.render(ctx.format)?;
    out.write_all(text.as_bytes()).map_err(|e| Error::Io(e.to_string()))
}

/// A printable value.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Int(u64),
    Str(String),
    Bool(bool),
    Missing,
}

impl Value {
    fn text(&self) -> String {
        match self {
            Value::Num(x) => fmt_sig(*x, 6),
            Value::Int(i) => i.to_string(),
            Value::Str(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
            Value::Missing => "-".into(),
        }
    }

    fn exact(&self) -> String {
        match self {
            Value::Num(x) => fmt_exact(*x),
            Value::Int(i) => i.to_string(),
            Value::Str(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
            Value::Missing => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Value::Num(x) if x.is_finite() => serde_json::json!(x),
            Value::Num(x) => serde_json::Value::String(fmt_exact(*x)),
            Value::Int(i) => serde_json::json!(i),
            Value::Str(s) => serde_json::Value::String(s.clone()),
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Missing => serde_json::Value::Null,
        }
    }
}

fn fmt_exact(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

/// `%g`-style formatting with `digits` significant digits.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return fmt_exact(x);
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let sci = format!("{:.*e}", digits - 1, x);
    // Rounding can bump the exponent, so read it back from the output.
    let (mantissa, e) = sci.split_once('e').unwrap();
    let e: i32 = e.parse().unwrap_or(exp);
    if e < -4 || e >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs());
    }
    let decimals = (digits as i32 - 1 - e).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Either one record or a table.
pub enum Output {
    Record(Vec<(&'static str, Value)>),
    Table { header: Vec<&'static str>, rows: Vec<Vec<Value>> },
}

impl Output {
    pub fn render(&self, format: Format) -> Result<String, Error> {
        match (self, format) {
            (Output::Record(fields), Format::Text) => {
                Ok(fields.iter().map(|(k, v)| format!("{k}: {}\n", v.text())).collect())
            }
            (Output::Record(fields), Format::Json) => {
                let map: serde_json::Map<String, serde_json::Value> =
                    fields.iter().map(|(k, v)| (k.to_string(), v.json())).collect();
                Ok(serde_json::to_string_pretty(&map).map_err(|e| Error::Io(e.to_string()))? + "\n")
            }
            (Output::Record(fields), Format::Csv) => {
                let header: Vec<&str> = fields.iter().map(|f| f.0).collect();
                let row: Vec<Value> = fields.iter().map(|f| f.1.clone()).collect();
                csv_text(&header, std::slice::from_ref(&row))
            }
            (Output::Table { header, rows }, Format::Text) => {
                let cells: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(Value::text).collect()).collect();
                let widths: Vec<usize> = (0..header.len())
                    .map(|i| cells.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
                    .collect();
                let line = |items: Vec<&str>| -> String {
                    let parts: Vec<String> = items.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
                    parts.join("  ").trim_end().to_string() + "\n"
                };
                let mut s = line(header.clone());
                for r in &cells {
                    s += &line(r.iter().map(String::as_str).collect());
                }
                Ok(s)
            }
            (Output::Table { header, rows }, Format::Json) => {
                let arr: Vec<serde_json::Value> = rows
                    .iter()
                    .map(|r| {
                        let map: serde_json::Map<String, serde_json::Value> =
                            header.iter().zip(r).map(|(k, v)| (k.to_string(), v.json())).collect();
                        serde_json::Value::Object(map)
                    })
                    .collect();
                Ok(serde_json::to_string_pretty(&arr).map_err(|e| Error::Io(e.to_string()))? + "\n")
            }
            (Output::Table { header, rows }, Format::Csv) => csv_text(header, rows),
        }
    }
}

fn csv_text(header: &[&str], rows: &[Vec<Value>]) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r.iter().map(Value::exact)).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Parameters resolved from a [`Source`], before the population is applied.
struct Resolved {
    params: VariationRatioParams,
    label: String,
    /// Local budget used for amplification ratios.
    eps0: f64,
    multi_message: bool,
    spec: Option<MechanismSpec>,
}

fn resolve(source: &Source, id_override: Option<&str>) -> Result<Resolved, Error> {
    let id = match (id_override, source.mechanism.as_deref()) {
        (Some(_), Some(_)) => return Err(Error::domain("mechanism given twice")),
        (a, b) => a.or(b),
    };
    let raw = source.p.is_some() || source.beta.is_some() || source.q.is_some();
    let sources = [id.is_some(), raw, source.matrix_file.is_some()].iter().filter(|&&b| b).count();
    if sources > 1 {
        return Err(Error::domain("give exactly one of --mechanism, raw --p/--beta/--q, or --matrix-file"));
    }
    if let Some(id) = id {
        let mech = Mechanism::from_id(id, &source.mech.to_args())?;
        let params = catalog(&mech)?;
        let eps0 = source.mech.eps0.unwrap_or_else(|| params.log_p());
        return Ok(Resolved { params, label: id.to_string(), eps0, multi_message: mech.is_multi_message(), spec: None });
    }
    if let Some(path) = &source.matrix_file {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let spec: MechanismSpec =
            serde_json::from_str(&text).map_err(|e| Error::domain(format!("matrix file {}: {e}", path.display())))?;
        let derived = derive_variation_ratio(&spec)?;
        let params = derived.params;
        return Ok(Resolved { params, label: "matrix".into(), eps0: params.log_p(), multi_message: false, spec: Some(spec) });
    }
    match (source.p, source.beta, source.q) {
        (Some(p), Some(beta), Some(q)) => {
            let params = VariationRatioParams::new(p, beta, q, 0)?;
            Ok(Resolved { params, label: "raw".into(), eps0: params.log_p(), multi_message: false, spec: None })
        }
        _ if raw => Err(Error::domain("raw parameters need all of --p, --beta and --q")),
        _ => Err(Error::domain("no parameters: give --mechanism, --p/--beta/--q, or --matrix-file")),
    }
}

fn apply_population(ctx: &Ctx, params: VariationRatioParams, pop: &Population) -> Result<VariationRatioParams, Error> {
    if let Some(nb) = pop.n_blanket {
        return Ok(VariationRatioParams { n_blanket: nb, ..params });
    }
    let n = pop.n.or(ctx.config.n).ok_or_else(|| Error::domain("missing --n"))?;
    if n == 0 {
        return Err(Error::domain("--n must be positive"));
    }
    Ok(match pop.messages {
        Some(0) => return Err(Error::domain("--messages must be positive")),
        Some(m) => params.with_multi_message(n, m),
        None => params.with_users(n),
    })
}

fn delta_of(ctx: &Ctx, flag: Option<f64>) -> Result<f64, Error> {
    flag.or(ctx.config.delta).ok_or_else(|| Error::domain("missing --delta"))
}

fn iters_of(ctx: &Ctx, flag: Option<u32>) -> u32 {
    flag.or(ctx.config.iters).unwrap_or(DEFAULT_ITERS)
}

fn params_fields(p: &VariationRatioParams) -> Vec<(&'static str, Value)> {
    vec![
        ("p", Value::Num(p.p)),
        ("beta", Value::Num(p.beta)),
        ("q", Value::Num(p.q)),
        ("alpha", Value::Num(p.alpha())),
        ("r", Value::Num(p.r())),
        ("n_blanket", Value::Int(p.n_blanket)),
    ]
}

fn bound_fields(res: &BoundResult) -> Vec<(&'static str, Value)> {
    let kind = serde_json::to_value(res.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    vec![
        ("eps", Value::Num(res.eps)),
        ("kind", Value::Str(kind)),
        ("resolution", Value::Num(res.resolution)),
        ("cap", Value::Num(res.cap)),
        ("evaluations", Value::Int(res.evaluations as u64)),
    ]
}

fn cmd_params(ctx: &Ctx, cmd: &ParamsCmd) -> Result<Output, Error> {
    let r = resolve(&cmd.source, cmd.id.as_deref())?;
    let has_pop = cmd.pop.n.is_some() || cmd.pop.n_blanket.is_some() || ctx.config.n.is_some();
    let params = if has_pop { apply_population(ctx, r.params, &cmd.pop)? } else { r.params };
    let mut fields = vec![("mechanism", Value::Str(r.label))];
    fields.extend(params_fields(&params));
    fields.push(("multi_message", Value::Bool(r.multi_message)));
    Ok(Output::Record(fields))
}

fn cmd_upper(ctx: &Ctx, cmd: &BoundCmd) -> Result<Output, Error> {
    let r = resolve(&cmd.source, None)?;
    let params = apply_population(ctx, r.params, &cmd.pop)?;
    let delta = delta_of(ctx, cmd.delta)?;
    let req = BoundRequest { params, delta, iters: iters_of(ctx, cmd.iters), opts: ctx.opts };
    let res = upper_bound(&req)?;
    let mut fields = bound_fields(&res);
    fields.push(("delta", Value::Num(delta)));
    fields.extend(params_fields(&params));
    Ok(Output::Record(fields))
}

fn cmd_lower(ctx: &Ctx, cmd: &LowerCmd) -> Result<Output, Error> {
    let b = &cmd.bound;
    let r = resolve(&b.source, None)?;
    let sym = apply_population(ctx, r.params, &b.pop)?;
    let asym = match (&r.spec, cmd.q0, cmd.q1) {
        (_, Some(q0), Some(q1)) => AsymmetricParams::new(sym.p, sym.beta, q0, q1, sym.n_blanket)?,
        (_, Some(_), None) | (_, None, Some(_)) => return Err(Error::domain("--q0 and --q1 go together")),
        (Some(spec), None, None) => {
            if spec.rows.len() < 2 {
                return Err(Error::domain("matrix needs at least two rows"));
            }
            let candidates = spec.blanket_rows.clone().unwrap_or_else(|| spec.rows.clone());
            let derived = derive_lower_params(&spec.rows[0], &spec.rows[1], &candidates)?;
            AsymmetricParams { n_blanket: sym.n_blanket, ..derived.params }
        }
        // Catalog rows carry a single ratio bound; use it on both sides.
        (None, None, None) => sym.to_asymmetric(),
    };
    let mode = if cmd.tight_upper { LowerMode::TightUpper } else { LowerMode::Lower };
    let delta = delta_of(ctx, b.delta)?;
    let req = LowerRequest { params: asym, delta, iters: iters_of(ctx, b.iters), mode, opts: ctx.opts };
    let res = lower_bound(&req)?;
    let mut fields = bound_fields(&res);
    fields.push(("delta", Value::Num(delta)));
    fields.extend([
        ("p", Value::Num(asym.p)),
        ("beta", Value::Num(asym.beta)),
        ("q0", Value::Num(asym.q0)),
        ("q1", Value::Num(asym.q1)),
        ("n_blanket", Value::Int(asym.n_blanket)),
    ]);
    Ok(Output::Record(fields))
}

fn closed_form_value(cf: &ClosedForm) -> (Value, Value) {
    match cf {
        ClosedForm::Bound { eps } => (Value::Num(*eps), Value::Str("ok".into())),
        ClosedForm::PreconditionFailed { condition } => {
            (Value::Missing, Value::Str(format!("precondition failed: {condition}")))
        }
    }
}

fn cmd_closed_form(ctx: &Ctx, cmd: &ClosedFormCmd) -> Result<Output, Error> {
    let r = resolve(&cmd.source, None)?;
    let params = apply_population(ctx, r.params, &cmd.pop)?;
    let delta = delta_of(ctx, cmd.delta)?;
    let (name, cf) = match cmd.kind {
        ClosedFormKind::Analytic => ("analytic", analytic_bound(&params, delta)?),
        ClosedFormKind::Asymptotic => ("asymptotic", asymptotic_bound(&params, delta)?),
    };
    let (eps, status) = closed_form_value(&cf);
    let mut fields = vec![("eps", eps), ("kind", Value::Str(name.into())), ("status", status), ("delta", Value::Num(delta))];
    fields.extend(params_fields(&params));
    Ok(Output::Record(fields))
}

fn cmd_compose(ctx: &Ctx, cmd: &ComposeCmd) -> Result<Output, Error> {
    let r = resolve(&cmd.source, None)?;
    let params = apply_population(ctx, r.params, &cmd.pop)?;
    let k = cmd.k.or(ctx.config.k).ok_or_else(|| Error::domain("missing --k"))?;
    let mut plan = CompositionPlan::new(
        k,
        cmd.eps_error.or(ctx.config.eps_error).unwrap_or(1e-2),
        cmd.delta_error.or(ctx.config.delta_error).unwrap_or(1e-9),
    );
    plan.gamma = cmd.gamma;
    plan.mesh = cmd.mesh;
    plan.homogeneous = !cmd.generic;
    plan.opts = ctx.opts;
    let comp = compose_rounds(&params, &plan)?;
    if let Some(delta) = cmd.delta.or(ctx.config.delta) {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("delta = {delta} not in (0, 1)")));
        }
        let eps = comp.eps_for_delta(delta).map(Value::Num).unwrap_or(Value::Num(f64::INFINITY));
        return Ok(Output::Record(vec![
            ("eps", eps),
            ("delta", Value::Num(delta)),
            ("k", Value::Int(k as u64)),
            ("mesh", Value::Num(comp.mesh)),
            ("eps_upper", Value::Num(comp.eps_upper)),
            ("gamma", cmd.gamma.map(Value::Num).unwrap_or(Value::Missing)),
        ]));
    }
    let curve = comp.curve();
    let rows = (0..curve.grid.len())
        .map(|i| vec![Value::Num(curve.grid[i]), Value::Num(curve.forward[i]), Value::Num(curve.backward[i])])
        .collect();
    Ok(Output::Table { header: vec!["eps", "delta_forward", "delta_backward"], rows })
}

/// Parses `start:end:points`.
pub fn parse_range(spec: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::domain(format!("range `{spec}` is not start:end:points"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let end: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let points: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if points == 0 || !start.is_finite() || !end.is_finite() || (points == 1 && start != end) {
        return Err(bad());
    }
    if points == 1 {
        return Ok(vec![start]);
    }
    let step = (end - start) / (points - 1) as f64;
    Ok((0..points).map(|i| if i + 1 == points { end } else { start + i as f64 * step }).collect())
}

fn cmd_sweep(ctx: &Ctx, cmd: &SweepCmd, out: &mut dyn Write) -> Result<(), Error> {
    let values = parse_range(&cmd.range)?;
    let delta = delta_of(ctx, cmd.delta)?;
    let iters = iters_of(ctx, cmd.iters);
    let mut rows = Vec::with_capacity(values.len());
    for &v in &values {
        let (params, eps0) = match cmd.vary {
            Vary::Eps0 => {
                let mut source = cmd.source.clone();
                if source.mechanism.is_none() {
                    return Err(Error::domain("--vary eps0 needs --mechanism"));
                }
                source.mech.eps0 = Some(v);
                let r = resolve(&source, None)?;
                (apply_population(ctx, r.params, &cmd.pop)?, v)
            }
            Vary::N => {
                if !(v >= 1.0) || v.fract() != 0.0 {
                    return Err(Error::domain(format!("n = {v} is not a positive integer")));
                }
                let r = resolve(&cmd.source, None)?;
                let pop = Population { n: Some(v as u64), n_blanket: None, ..cmd.pop.clone() };
                (apply_population(ctx, r.params, &pop)?, r.eps0)
            }
            Vary::Beta => {
                let r = resolve(&cmd.source, None)?;
                (apply_population(ctx, r.params.with_beta(v)?, &cmd.pop)?, r.eps0)
            }
        };
        let req = BoundRequest { params, delta, iters, opts: ctx.opts };
        let eps = upper_bound(&req)?.eps;
        let analytic = analytic_bound(&params, delta)?.eps();
        let asymptotic = asymptotic_bound(&params, delta)?.eps();
        let ratio = eps0 / eps;
        let opt = |x: Option<f64>| x.map(Value::Num).unwrap_or(Value::Missing);
        rows.push(vec![
            Value::Num(v),
            Value::Num(eps),
            opt(analytic),
            opt(asymptotic),
            Value::Num(ratio),
            Value::Num(ratio.log2()),
        ]);
    }
    let table = Output::Table {
        header: vec!["param", "eps_numeric", "eps_analytic", "eps_asymptotic", "amplification_ratio", "log2_ratio"],
        rows,
    };
    match &cmd.out {
        Some(path) => {
            let text = table.render(Format::Csv)?;
            fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let summary = Output::Record(vec![
                ("rows", Value::Int(values.len() as u64)),
                ("out", Value::Str(path.display().to_string())),
            ]);
            out.write_all(summary.render(ctx.format)?.as_bytes()).map_err(|e| Error::Io(e.to_string()))
        }
        None => {
            let format = if ctx.format == Format::Text { Format::Csv } else { ctx.format };
            out.write_all(table.render(format)?.as_bytes()).map_err(|e| Error::Io(e.to_string()))
        }
    }
}

fn cmd_oracle(ctx: &Ctx, cmd: &OracleCmd) -> Result<Output, Error> {
    let b = &cmd.bound;
    let r = resolve(&b.source, None)?;
    let params = apply_population(ctx, r.params, &b.pop)?;
    let cap = cmd.max_n.or(ctx.config.max_n).unwrap_or(2000).min(BRUTE_FORCE_MAX_N);
    if params.n_blanket > cap {
        return Err(Error::Size(format!("n_blanket = {} exceeds --max-n {cap}", params.n_blanket)));
    }
    let delta = delta_of(ctx, b.delta)?;
    let req = BoundRequest { params, delta, iters: iters_of(ctx, b.iters), opts: ctx.opts };
    let res = oracle_upper_bound(&req)?;
    let mut fields = bound_fields(&res);
    fields.push(("delta", Value::Num(delta)));
    fields.extend(params_fields(&params));
    Ok(Output::Record(fields))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.0433062, 6), "0.0433062");
        assert_eq!(fmt_sig(0.04330621234, 6), "0.0433062");
        assert_eq!(fmt_sig(2.718281828, 6), "2.71828");
        assert_eq!(fmt_sig(1.0, 6), "1");
        assert_eq!(fmt_sig(9.5367431640625e-7, 6), "9.53674e-07");
        assert_eq!(fmt_sig(999999.7, 6), "1e+06");
        assert_eq!(fmt_sig(f64::INFINITY, 6), "inf");
    }

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("1:2:3").unwrap(), vec![1.0, 1.5, 2.0]);
        assert_eq!(parse_range("4:4:1").unwrap(), vec![4.0]);
        assert!(parse_range("1:2").is_err());
        assert!(parse_range("1:2:0").is_err());
    }
}
