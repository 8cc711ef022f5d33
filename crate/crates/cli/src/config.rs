//! Command-line parsing into a validated [`RunConfig`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ma1_core::{GridSpec, InnovationModel};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "ma1max", version, about = "Distribution of the maximum of an MA(1) sequence")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum CommandKind {
    /// Recurrence route (and the Bell route when rho < 0).
    Exact,
    /// Eigen-expansion route with its large-n asymptote.
    Spectral,
    /// Taylor-series eigen-solver: roots of the truncated eigenvalue equation.
    SeriesEigen,
    /// Monte Carlo estimate with standard errors.
    Mc,
    /// Aligned table across routes; exits 3 on disagreement.
    Compare,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Spectral => "spectral",
            Self::SeriesEigen => "series-eigen",
            Self::Mc => "mc",
            Self::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Opts {
    /// `normal`, `gumbel`, `expleft:a=<f>` or `uniform:lo=<f>,hi=<f>`.
    #[arg(long, global = true, default_value = "normal")]
    pub model: String,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true, conflicts_with = "x_grid")]
    pub x: Option<f64>,
    /// Threshold sweep `lo:hi:steps`.
    #[arg(long = "x-grid", global = true, allow_hyphen_values = true)]
    pub x_grid: Option<String>,
    /// Largest horizon n.
    #[arg(long, global = true, default_value_t = 10)]
    pub n: usize,
    #[arg(long, global = true, default_value_t = 64)]
    pub panels: usize,
    #[arg(long, global = true, default_value_t = 8)]
    pub order: usize,
    #[arg(long = "tail-eps", global = true, default_value_t = 1e-12)]
    pub tail_eps: f64,
    /// Eigenmodes retained by the spectral route.
    #[arg(long, global = true, default_value_t = 40)]
    pub modes: usize,
    #[arg(long, global = true, default_value_t = 1_000_000)]
    pub paths: u64,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Largest tolerated discrepancy between deterministic routes.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol: f64,
    /// Long-format `n,u,method` CSV for plotting.
    #[arg(long = "emit-plot-data", global = true)]
    pub emit_plot_data: Option<PathBuf>,
    /// Extra columns for `spectral`: any of `exact`, `mc`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub compare: Vec<Route>,
    /// Routes for `compare`.
    #[arg(
        long,
        global = true,
        value_delimiter = ',',
        default_value = "exact,bell,spectral,determinant,mc"
    )]
    pub methods: Vec<Route>,
    /// Truncation order of the series eigen-solver.
    #[arg(long = "series-order", global = true, default_value_t = 12)]
    pub series_order: usize,
    /// Also report the i.i.d. value F(x)^n; required to run with rho = 0.
    #[arg(long = "iid-reference", global = true)]
    pub iid_reference: bool,
}

/// A route selectable for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
pub enum Route {
    Exact,
    Bell,
    /// Direct eigen-sum for rho > 0, delta/gamma expansion for rho < 0.
    Spectral,
    Determinant,
    Mc,
}

impl Route {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Bell => "bell",
            Self::Spectral => "spectral",
            Self::Determinant => "determinant",
            Self::Mc => "mc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XSpec {
    Single(f64),
    Grid { lo: f64, hi: f64, steps: usize },
}

impl XSpec {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Self::Single(x) => vec![x],
            Self::Grid { lo, hi, steps } => {
                if steps == 1 {
                    return vec![lo];
                }
                (0..steps)
                    .map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64)
                    .collect()
            }
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self, Self::Grid { .. })
    }
}

impl FromStr for XSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Usage(format!("--x-grid expects lo:hi:steps, got `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if steps == 0 || !(lo.is_finite() && hi.is_finite()) || (steps > 1 && lo >= hi) {
            return Err(bad());
        }
        Ok(Self::Grid { lo, hi, steps })
    }
}

impl fmt::Display for XSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Single(x) => write!(f, "{x}"),
            Self::Grid { lo, hi, steps } => write!(f, "{lo}:{hi}:{steps}"),
        }
    }
}

/// Fully validated run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub model: InnovationModel,
    pub rho: f64,
    pub xs: XSpec,
    pub n_max: usize,
    pub grid: GridSpec,
    pub modes: usize,
    pub paths: u64,
    pub seed: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub tol: f64,
    pub emit_plot_data: Option<PathBuf>,
    pub compare: Vec<Route>,
    pub methods: Vec<Route>,
    pub series_order: usize,
    pub iid_reference: bool,
}

impl RunConfig {
    /// Parses and validates an argument vector (program name first).
    pub fn parse_from<I, T>(args: I) -> Result<Self, CliError>
    where
        I: IntoIterator<Item = T>,
        T: Into<std::ffi::OsString> + Clone,
    {
        let cli = Cli::try_parse_from(args).map_err(|e| CliError::Clap {
            message: e.render().to_string(),
            is_error: e.use_stderr(),
        })?;
        Self::from_cli(cli)
    }

    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        let o = cli.opts;
        let model: InnovationModel = o.model.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
        let rho = o
            .rho
            .ok_or_else(|| CliError::Usage("--rho is required".into()))?;
        if !rho.is_finite() {
            return Err(CliError::Usage(format!("--rho must be finite, got {rho}")));
        }
        if rho == 0.0 && !(o.iid_reference && cli.command == CommandKind::Exact) {
            return Err(CliError::Usage(
                "rho = 0 makes the sequence i.i.d. and the operator vanish; \
                 use `exact --iid-reference` for F(x)^n"
                    .into(),
            ));
        }
        let xs = match (o.x, o.x_grid) {
            (Some(x), None) if x.is_finite() => XSpec::Single(x),
            (Some(x), None) => return Err(CliError::Usage(format!("--x must be finite, got {x}"))),
            (None, Some(g)) => g.parse()?,
            (None, None) => return Err(CliError::Usage("one of --x or --x-grid is required".into())),
            (Some(_), Some(_)) => {
                return Err(CliError::Usage("--x and --x-grid are mutually exclusive".into()))
            }
        };
        if o.n == 0 {
            return Err(CliError::Usage("--n must be at least 1".into()));
        }
        if !(o.tol > 0.0) {
            return Err(CliError::Usage(format!("--tol must be positive, got {}", o.tol)));
        }
        if o.modes == 0 {
            return Err(CliError::Usage("--modes must be at least 1".into()));
        }
        if cli.command == CommandKind::Compare {
            let distinct: std::collections::HashSet<_> = o.methods.iter().collect();
            if distinct.len() < 2 {
                return Err(CliError::Usage("compare needs at least two --methods".into()));
            }
        }
        let grid = GridSpec {
            panels: o.panels,
            order: o.order,
            tail_eps: o.tail_eps,
        };
        // Grid validity is checked here so that bad values are usage errors.
        model
            .truncation_bounds(grid.tail_eps)
            .and_then(|b| ma1_core::quadrature::build_grid(b, grid.panels, grid.order))
            .map_err(|e| CliError::Usage(format!("{e}")))?;
        Ok(Self {
            command: cli.command,
            model,
            rho,
            xs,
            n_max: o.n,
            grid,
            modes: o.modes,
            paths: o.paths,
            seed: o.seed,
            format: o.format,
            out: o.out,
            tol: o.tol,
            emit_plot_data: o.emit_plot_data,
            compare: o.compare,
            methods: o.methods,
            series_order: o.series_order,
            iid_reference: o.iid_reference,
        })
    }

    /// Argument vector that parses back to this configuration.
    pub fn render(&self) -> Vec<String> {
        let join = |r: &[Route]| r.iter().map(|m| m.name()).collect::<Vec<_>>().join(",");
        let mut a: Vec<String> = vec!["ma1max".into(), self.command.name().into()];
        let mut kv = |k: &str, v: String| {
            a.push(format!("--{k}"));
            a.push(v);
        };
        kv("model", self.model.to_string());
        kv("rho", self.rho.to_string());
        match self.xs {
            XSpec::Single(x) => kv("x", x.to_string()),
            g => kv("x-grid", g.to_string()),
        }
        kv("n", self.n_max.to_string());
        kv("panels", self.grid.panels.to_string());
        kv("order", self.grid.order.to_string());
        kv("tail-eps", self.grid.tail_eps.to_string());
        kv("modes", self.modes.to_string());
        kv("paths", self.paths.to_string());
        kv("seed", self.seed.to_string());
        kv(
            "format",
            match self.format {
                Format::Csv => "csv".into(),
                Format::Json => "json".into(),
            },
        );
        if let Some(p) = &self.out {
            kv("out", p.display().to_string());
        }
        kv("tol", self.tol.to_string());
        if let Some(p) = &self.emit_plot_data {
            kv("emit-plot-data", p.display().to_string());
        }
        if !self.compare.is_empty() {
            kv("compare", join(&self.compare));
        }
        kv("methods", join(&self.methods));
        kv("series-order", self.series_order.to_string());
        if self.iid_reference {
            a.push("--iid-reference".into());
        }
        a
    }
}
