//! Command-line front end.
//!
//! Every command prints a few `# `-prefixed metadata lines to stderr and
//! reports failures as a single `error kind=<kind> code=<n> message="..."`
//! line, with exit status 2 (configuration), 3 (solver) or 4 (I/O).

mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bounds::{sweep, SmithCache, DEFAULT_SMITH_TOL, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::model::ChannelParams;
use crate::power_control::{closed_form_value, optimal_allocation};
use crate::simulator::{make_policy, simulate, PolicyKind};
use crate::smith::{SmithConfig, SmithSolver};

pub use output::{
    csv_string, parse_csv, parse_svg_shapes, read_csv, svg_string, write_csv, write_csv_with_metadata,
    write_svg_plot, PlotOptions, PlotStyle, Series, CSV_HEADER,
};

/// Environment variable capping the number of sweep workers.
pub const THREADS_ENV: &str = "RBRCAP_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Spacing {
    Linear,
    Log,
}

/// `start:stop:count[:spacing]`, or a single value.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("grid {text:?}: {why}"));
        let parts: Vec<&str> = text.split(':').collect();
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("{s:?} is not a number")));
        let spec = match parts.as_slice() {
            [v] => {
                let v = num(v)?;
                GridSpec { start: v, stop: v, count: 1, spacing: Spacing::Log }
            }
            [a, b, n] | [a, b, n, _] => {
                let spacing = match parts.get(3).map(|s| s.trim()) {
                    None | Some("log") => Spacing::Log,
                    Some("linear") | Some("lin") => Spacing::Linear,
                    Some(other) => return Err(bad(&format!("unknown spacing {other:?}"))),
                };
                let count = n.trim().parse::<usize>().map_err(|_| bad("count must be a positive integer"))?;
                GridSpec { start: num(a)?, stop: num(b)?, count, spacing }
            }
            _ => return Err(bad("expected start:stop:count[:spacing]")),
        };
        spec.validate().map_err(|e| bad(&e))?;
        Ok(spec)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.count == 0 {
            return Err("count must be at least 1".into());
        }
        if !self.start.is_finite() || !self.stop.is_finite() || self.start < 0.0 {
            return Err("endpoints must be finite and nonnegative".into());
        }
        if self.count > 1 && !(self.start < self.stop) {
            return Err("start must be below stop".into());
        }
        if self.count > 1 && self.spacing == Spacing::Log && self.start <= 0.0 {
            return Err("log spacing needs a positive start".into());
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let last = (self.count - 1) as f64;
        let mut v: Vec<f64> = (0..self.count)
            .map(|i| {
                let f = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.start + (self.stop - self.start) * f,
                    Spacing::Log => self.start * (self.stop / self.start).powf(f),
                }
            })
            .collect();
        v[self.count - 1] = self.stop;
        v
    }
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sp = match self.spacing {
            Spacing::Linear => "linear",
            Spacing::Log => "log",
        };
        write!(f, "{}:{}:{}:{sp}", self.start, self.stop, self.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Svg,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    /// Causal bounds with the shaded band and the unlimited-battery ceiling.
    Gap,
    /// Smith-based noncausal lower bound against the causal bounds.
    Crossing,
}

impl From<StyleArg> for PlotStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Gap => PlotStyle::Gap,
            StyleArg::Crossing => PlotStyle::Crossing,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rbrcap", version, about = "Capacity bounds and power control for the random battery recharge channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Tolerances {
    /// Truncation tolerance of the epoch-length series (bits).
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Bracket width of each amplitude-constrained capacity (bits).
    #[arg(long, default_value_t = DEFAULT_SMITH_TOL)]
    smith_tol: f64,
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Evaluate every bound over a battery grid.
    Bounds {
        #[arg(long)]
        p: f64,
        /// Battery grid, `start:stop:count[:linear|log]` or a single value.
        #[arg(long = "bbar")]
        b_bar: String,
        #[command(flatten)]
        tolerances: Tolerances,
        /// Output file; CSV goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, value_enum, default_value_t = StyleArg::Gap)]
        style: StyleArg,
    },
    /// Optimal online allocation at one point.
    Policy {
        #[arg(long)]
        p: f64,
        #[arg(long = "bbar")]
        b_bar: f64,
    },
    /// Monte-Carlo run of a power policy.
    Simulate {
        #[arg(long)]
        p: f64,
        #[arg(long = "bbar")]
        b_bar: f64,
        /// optimal, greedy, zero or constant_fraction:<f>.
        #[arg(long, default_value = "optimal")]
        policy: String,
        #[arg(long, default_value_t = 1_000_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Amplitude-constrained AWGN capacity.
    Smith {
        #[arg(long)]
        amplitude: f64,
        #[arg(long, default_value_t = DEFAULT_SMITH_TOL)]
        tol: f64,
        /// Number of input grid points (odd).
        #[arg(long, default_value_t = 801)]
        grid_points: usize,
    },
    /// Draw an SVG from a CSV written by `bounds`.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = StyleArg::Gap)]
        style: StyleArg,
    },
}

/// A parsed command together with the arguments that produced it.
#[derive(Debug, Clone)]
pub struct RunConfig {
    command: Command,
    args: Vec<String>,
}

impl RunConfig {
    /// Parses `args` (without the program name).
    pub fn parse<I, S>(args: I) -> std::result::Result<Self, clap::Error>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let args: Vec<String> = args.into_iter().map(Into::into).collect();
        let cli = Cli::try_parse_from(std::iter::once("rbrcap".to_string()).chain(args.iter().cloned()))?;
        Ok(Self { command: cli.command, args })
    }

    /// The command line, quoted where needed.
    pub fn command_line(&self) -> String {
        let quote = |a: &String| {
            if a.is_empty() || a.chars().any(|c| c.is_whitespace() || c == '"') {
                format!("{a:?}")
            } else {
                a.clone()
            }
        };
        std::iter::once("rbrcap".to_string()).chain(self.args.iter().map(quote)).collect::<Vec<_>>().join(" ")
    }

    fn metadata(&self, extra: &[String]) -> Vec<String> {
        let mut m = vec![format!("rbrcap {}", env!("CARGO_PKG_VERSION")), format!("command: {}", self.command_line())];
        m.extend_from_slice(extra);
        m
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn params(p: f64, b_bar: f64) -> Result<ChannelParams<f64>> {
    ChannelParams::new(p, b_bar).map_err(|e| Error::Config(e.to_string()))
}

fn parse_policy(text: &str) -> Result<PolicyKind<f64>> {
    match text {
        "optimal" => Ok(PolicyKind::Optimal),
        "greedy" => Ok(PolicyKind::Greedy),
        "zero" => Ok(PolicyKind::Zero),
        other => match other.split_once(':').or_else(|| other.split_once('=')) {
            Some(("constant_fraction", f)) => f
                .parse()
                .map(PolicyKind::ConstantFraction)
                .map_err(|_| Error::Config(format!("bad fraction {f:?}"))),
            _ => Err(Error::Config(format!("unknown policy {other:?}"))),
        },
    }
}

/// Worker count for sweeps: the machine's parallelism, capped by
/// `RBRCAP_THREADS` when set.
pub fn sweep_threads() -> Result<usize> {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n.min(available)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(available),
    }
}

fn check_output(path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(Error::Io(format!("{}: output directory does not exist", path.display())));
    }
    Ok(())
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

/// Executes `config`, writing results to `stdout` and progress and
/// metadata to `stderr`.
pub fn run(config: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let meta = |stderr: &mut dyn Write, lines: &[String]| -> Result<()> {
        for l in lines {
            writeln!(stderr, "# {l}")?;
        }
        Ok(())
    };
    match &config.command {
        Command::Bounds { p, b_bar, tolerances, out, format, style } => {
            let grid = GridSpec::parse(b_bar)?;
            check_positive("--tol", tolerances.tol)?;
            check_positive("--smith-tol", tolerances.smith_tol)?;
            params(*p, grid.start)?;
            if *format != Format::Csv && out.is_none() {
                return Err(Error::Config("--out is required for svg output".into()));
            }
            if let Some(out) = out {
                check_output(out)?;
            }
            let cache = SmithCache::<f64>::default();
            let metadata = config.metadata(&[
                format!("p: {p}"),
                format!("grid: {grid}"),
                format!("tol: {:e} bits, smith_tol: {:e} bits", tolerances.tol, tolerances.smith_tol),
                format!("smith solver: {}", cache.solver().describe()),
            ]);
            meta(stderr, &metadata)?;
            let threads = sweep_threads()?;
            writeln!(stderr, "# computing {} grid points on {threads} thread(s)", grid.count)?;
            let reports = sweep(*p, &grid.points(), tolerances.tol, tolerances.smith_tol, &cache, threads)?;
            writeln!(stderr, "# done: {} amplitude-constrained solves", cache.solves())?;

            let csv_path = out.as_ref().map(|o| if *format == Format::Both { with_extension(o, "csv") } else { o.clone() });
            match (format, &csv_path) {
                (Format::Csv, None) => stdout.write_all(csv_string(&reports, &metadata)?.as_bytes())?,
                (Format::Csv | Format::Both, Some(path)) => write_csv_with_metadata(&reports, &metadata, path)?,
                _ => {}
            }
            if *format != Format::Csv {
                let out = out.as_ref().expect("checked above");
                let svg_path = if *format == Format::Both { with_extension(out, "svg") } else { out.clone() };
                let options = PlotOptions::preset((*style).into(), format!("Capacity bounds, p = {p}"), metadata.clone());
                write_svg_plot(&reports, &svg_path, &options)?;
            }
        }
        Command::Policy { p, b_bar } => {
            let pr = params(*p, *b_bar)?;
            meta(stderr, &config.metadata(&[]))?;
            let sol = optimal_allocation(&pr)?;
            writeln!(stdout, "n_tilde={}", sol.n_tilde)?;
            writeln!(stdout, "lambda_tilde={}", sol.lambda_tilde)?;
            writeln!(stdout, "value_bits={}", sol.value_bits.value())?;
            if *p < 1.0 && *b_bar > 0.0 {
                writeln!(stdout, "closed_form_bits={}", closed_form_value(&pr)?.value())?;
            }
            for (i, e) in sol.eps.iter().enumerate() {
                writeln!(stdout, "eps[{}]={e}", i + 1)?;
            }
        }
        Command::Simulate { p, b_bar, policy, steps, seed } => {
            let pr = params(*p, *b_bar)?;
            let kind = parse_policy(policy)?;
            let pol = make_policy(kind, &pr).map_err(|e| Error::Config(e.to_string()))?;
            meta(stderr, &config.metadata(&[format!("rng: ChaCha8 seed={seed}")]))?;
            if *steps < crate::simulator::MIN_STEPS {
                return Err(Error::Config(format!("--steps must be at least {}", crate::simulator::MIN_STEPS)));
            }
            let r = simulate(&pr, &pol, *steps, *seed)?;
            writeln!(
                stdout,
                "throughput_bits={} +/- {} (policy {}, {} steps, seed {})",
                r.empirical_throughput_bits.value(),
                r.std_error_bits,
                kind.name(),
                r.steps,
                r.seed
            )?;
            writeln!(stdout, "epochs={} mean_epoch_length={}", r.epoch_count, r.mean_epoch_length)?;
            writeln!(stdout, "battery_violations={}", r.battery_violations)?;
        }
        Command::Smith { amplitude, tol, grid_points } => {
            check_positive("--tol", *tol)?;
            let config_s = SmithConfig { grid_points: *grid_points, ..SmithConfig::default() };
            let solver = SmithSolver::new(config_s).map_err(|e| Error::Config(e.to_string()))?;
            if !(amplitude.is_finite() && *amplitude >= 0.0) {
                return Err(Error::Config(format!("--amplitude must be finite and nonnegative, got {amplitude}")));
            }
            meta(stderr, &config.metadata(&[format!("smith solver: {}", solver.describe())]))?;
            let s = solver.solve(*amplitude, *tol)?;
            writeln!(stdout, "capacity_bits={}", s.capacity_bits.value())?;
            writeln!(stdout, "optimality_gap_bits={}", s.optimality_gap_bits)?;
            writeln!(stdout, "iterations={}", s.iterations)?;
            for (x, w) in &s.support {
                writeln!(stdout, "support {x} {w}")?;
            }
        }
        Command::Plot { input, out, style } => {
            check_output(out)?;
            let (reports, source) = read_csv::<f64>(input)?;
            let mut metadata = config.metadata(&[format!("source: {}", input.display())]);
            metadata.extend(source.into_iter().map(|l| format!("source {l}")));
            meta(stderr, &metadata[..2])?;
            let p = reports[0].params.p();
            let options = PlotOptions::preset((*style).into(), format!("Capacity bounds, p = {p}"), metadata);
            write_svg_plot(&reports, out, &options)?;
        }
    }
    Ok(())
}

/// One-line error report for stderr.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("error kind={} code={} message=\"{msg}\"", e.kind(), e.exit_code())
}

/// Runs the command line `args` (without the program name) and returns the
/// exit status.
pub fn main_with_args(args: Vec<String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let config = match RunConfig::parse(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            let _ = writeln!(stderr, "{}", error_line(&Error::Config(first)));
            return 2;
        }
    };
    match run(&config, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_line(&e));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_specs() {
        let g = GridSpec::parse("0.1:1000:5").unwrap();
        assert_eq!(g.spacing, Spacing::Log);
        let pts = g.points();
        assert_eq!(pts.len(), 5);
        assert_eq!(pts[0], 0.1);
        assert_eq!(pts[4], 1000.0);
        assert!((pts[2] - 10.0).abs() < 1e-12);
        let lin = GridSpec::parse("0:10:6:linear").unwrap().points();
        assert_eq!(lin, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(GridSpec::parse("2").unwrap().points(), vec![2.0]);
        for bad in ["", "1:2", "1:2:0", "2:1:3", "0:1:3:log", "1:2:3:cubic", "a:2:3", "1:2:x"] {
            assert!(GridSpec::parse(bad).is_err(), "{bad}");
        }
        assert_eq!(GridSpec::parse("1:100:3:log").unwrap().to_string(), "1:100:3:log");
    }

    #[test]
    fn policies_parse() {
        assert_eq!(parse_policy("greedy").unwrap(), PolicyKind::Greedy);
        assert_eq!(parse_policy("constant_fraction:0.25").unwrap(), PolicyKind::ConstantFraction(0.25));
        assert!(parse_policy("lazy").is_err());
    }

    #[test]
    fn error_lines_are_single_line() {
        let e = Error::Config("bad \"value\"\nsecond".into());
        let l = error_line(&e);
        assert!(!l.contains('\n'));
        assert!(l.starts_with("error kind=config code=2 message="));
    }
}
