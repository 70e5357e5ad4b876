//! Run configuration: built-in defaults, overlaid by a JSON file, overlaid by
//! command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use gelfand_core::extremal::MIN_ALPHA_POINTS;
use gelfand_core::{FlowSpec, NonlinearitySpec, Stencil, Tolerances};

/// A configuration problem; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration at `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Constant,
    InverseQuadratic,
    Plateau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StencilArg {
    Flux,
    Central,
}

impl From<StencilArg> for Stencil {
    fn from(s: StencilArg) -> Self {
        match s {
            StencilArg::Flux => Stencil::Flux,
            StencilArg::Central => Stencil::Central,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Exp,
    Power,
    Mems,
    PowerComposite,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Always overwritten by the subcommand actually run.
    pub subcommand: String,
    pub flow: FlowSpec,
    #[serde(rename = "A")]
    pub amplitude: f64,
    #[serde(rename = "N")]
    pub dim: usize,
    #[serde(rename = "M")]
    pub cells: usize,
    pub nonlinearity: NonlinearitySpec,
    pub stencil: Stencil,
    pub tolerances: Tolerances,
    pub alpha_points: usize,
    #[serde(rename = "A_list")]
    pub a_list: Vec<f64>,
    pub p_list: Vec<f64>,
    pub fractions: Vec<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            subcommand: String::new(),
            flow: FlowSpec::InverseQuadratic,
            amplitude: 1.0,
            dim: 2,
            cells: 1024,
            nonlinearity: NonlinearitySpec::Exp,
            stencil: Stencil::default(),
            tolerances: Tolerances::default(),
            alpha_points: 512,
            a_list: vec![0.0, 1.0, 10.0, 100.0],
            p_list: vec![1.0, 2.0, 4.0, 8.0],
            fractions: vec![0.0625, 0.125, 0.25, 0.5],
            out: None,
            format: None,
            jobs: None,
        }
    }
}

/// Flags shared by every computing subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON configuration file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
    /// Value of a constant profile.
    #[arg(long = "rho-c", allow_hyphen_values = true)]
    pub rho_c: Option<f64>,
    /// Plateau endpoints a b: the profile vanishes on [a, b].
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub plateau: Option<Vec<f64>>,
    /// Drift amplitude.
    #[arg(long = "A")]
    pub amplitude: Option<f64>,
    /// Space dimension.
    #[arg(long = "N")]
    pub dim: Option<usize>,
    /// Number of grid cells.
    #[arg(long = "M")]
    pub cells: Option<usize>,
    /// Nonlinearity family.
    #[arg(long = "f", value_enum)]
    pub kind: Option<KindArg>,
    /// Exponent for power and power-composite nonlinearities.
    #[arg(long)]
    pub p: Option<f64>,
    /// Exponent for the MEMS nonlinearity.
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, value_enum)]
    pub stencil: Option<StencilArg>,
    #[arg(long = "tol-iter")]
    pub tol_iter: Option<f64>,
    #[arg(long = "tol-bisect")]
    pub tol_bisect: Option<f64>,
    #[arg(long = "tol-eigen")]
    pub tol_eigen: Option<f64>,
    #[arg(long = "alpha-points")]
    pub alpha_points: Option<usize>,
    /// Comma-separated drift amplitudes.
    #[arg(long = "A-list", value_delimiter = ',')]
    pub a_list: Option<Vec<f64>>,
    /// Comma-separated composition exponents.
    #[arg(long = "p-list", value_delimiter = ',')]
    pub p_list: Option<Vec<f64>>,
    /// Comma-separated fractions of lambda_lo.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for sweep points.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Read a configuration file; errors carry the JSON path of the bad field.
pub fn load_file(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| bad("config", format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        bad(&field, e.into_inner().to_string())
    })
}

impl RunConfig {
    /// Defaults, then the config file, then flags.
    pub fn resolve(subcommand: &str, o: &Overrides) -> Result<Self, ConfigError> {
        let mut c = match &o.config {
            Some(path) => load_file(path)?,
            None => RunConfig::default(),
        };
        c.subcommand = subcommand.to_string();
        c.apply(o)?;
        c.validate()?;
        Ok(c)
    }

    fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        match o.profile {
            Some(ProfileArg::Constant) => {
                let c = o.rho_c.unwrap_or(match self.flow {
                    FlowSpec::Constant { c } => c,
                    _ => 0.0,
                });
                self.flow = FlowSpec::Constant { c };
            }
            Some(ProfileArg::InverseQuadratic) => {
                if o.rho_c.is_some() {
                    return Err(bad("rho-c", "only applies to the constant profile"));
                }
                self.flow = FlowSpec::InverseQuadratic;
            }
            Some(ProfileArg::Plateau) => {
                let (a, b, outer) = match (&o.plateau, &self.flow) {
                    (Some(v), _) => (v[0], v[1], 1.0),
                    (None, FlowSpec::Plateau { a, b, outer }) => (*a, *b, *outer),
                    (None, _) => return Err(bad("plateau", "the plateau profile needs --plateau a b")),
                };
                self.flow = FlowSpec::Plateau { a, b, outer };
            }
            None => {
                if let Some(c) = o.rho_c {
                    self.flow = FlowSpec::Constant { c };
                }
                if let Some(v) = &o.plateau {
                    self.flow = FlowSpec::Plateau {
                        a: v[0],
                        b: v[1],
                        outer: 1.0,
                    };
                }
            }
        }

        match o.kind {
            Some(kind) => {
                let need_p = |what: &str| o.p.ok_or_else(|| bad("p", format!("--f {what} needs --p")));
                self.nonlinearity = match kind {
                    KindArg::Exp => NonlinearitySpec::Exp,
                    KindArg::Power => NonlinearitySpec::Power { p: need_p("power")? },
                    KindArg::Mems => NonlinearitySpec::Mems {
                        q: o.q.ok_or_else(|| bad("q", "--f mems needs --q"))?,
                    },
                    KindArg::PowerComposite => NonlinearitySpec::PowerComposite {
                        p: need_p("power-composite")?,
                        base: Box::new(NonlinearitySpec::Exp),
                    },
                };
            }
            None => {
                if let Some(new_p) = o.p {
                    match &mut self.nonlinearity {
                        NonlinearitySpec::Power { p } | NonlinearitySpec::PowerComposite { p, .. } => *p = new_p,
                        _ => return Err(bad("p", "the configured nonlinearity has no exponent p")),
                    }
                }
                if let Some(new_q) = o.q {
                    match &mut self.nonlinearity {
                        NonlinearitySpec::Mems { q } => *q = new_q,
                        _ => return Err(bad("q", "the configured nonlinearity has no exponent q")),
                    }
                }
            }
        }

        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(self.amplitude, o.amplitude);
        set!(self.dim, o.dim);
        set!(self.cells, o.cells);
        set!(self.stencil, o.stencil.map(Stencil::from));
        set!(self.tolerances.iteration, o.tol_iter);
        set!(self.tolerances.bisection, o.tol_bisect);
        set!(self.tolerances.eigen, o.tol_eigen);
        set!(self.alpha_points, o.alpha_points);
        set!(self.a_list, o.a_list);
        set!(self.p_list, o.p_list);
        set!(self.fractions, o.fractions);
        if o.out.is_some() {
            self.out = o.out.clone();
        }
        if o.format.is_some() {
            self.format = o.format;
        }
        if o.jobs.is_some() {
            self.jobs = o.jobs;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.iteration", t.iteration),
            ("tolerances.bisection", t.bisection),
            ("tolerances.eigen", t.eigen),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.cells < 16 {
            return Err(bad("M", format!("must be >= 16, got {}", self.cells)));
        }
        if self.dim < 2 {
            return Err(bad("N", format!("must be >= 2, got {}", self.dim)));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(bad("A", format!("must be finite and >= 0, got {}", self.amplitude)));
        }
        if self.alpha_points < MIN_ALPHA_POINTS {
            return Err(bad("alpha_points", format!("must be >= {MIN_ALPHA_POINTS}")));
        }
        if self.jobs == Some(0) {
            return Err(bad("jobs", "must be >= 1"));
        }
        if let Some(out) = &self.out {
            let dir = match out.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            match std::fs::metadata(&dir) {
                Ok(m) if m.is_dir() && !m.permissions().readonly() => {}
                Ok(_) => return Err(bad("out", format!("{} is not a writable directory", dir.display()))),
                Err(e) => return Err(bad("out", format!("{}: {e}", dir.display()))),
            }
        }
        Ok(())
    }

    /// Canonical JSON of the resolved configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
