//! Run configuration: a JSON document with `command`, `seed`, `out` and a
//! command-specific `parameters` object. Unknown keys are rejected and every
//! default is written back so reports echo the fully resolved run.

use std::fmt;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::algebraic::EXAMPLE_SEED;
use crate::volterra::KernelSampling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Certify,
    Solve,
    Volterra,
    BieleckiCheck,
    Example,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Certify => "certify",
            Command::Solve => "solve",
            Command::Volterra => "volterra",
            Command::BieleckiCheck => "bielecki-check",
            Command::Example => "example",
        };
        f.write_str(s)
    }
}

/// A configuration problem, located by its JSON path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    /// Output directory; not echoed so reports do not depend on where they are written.
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub parameters: Parameters,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Parameters {
    Certify(CertifyParams),
    Solve(SolveParams),
    Volterra(VolterraParams),
    BieleckiCheck(BieleckiCheckParams),
    Example(ExampleParams),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Option<Command>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    #[serde(default)]
    parameters: Option<serde_json::Value>,
}

fn from_value<T: DeserializeOwned>(value: serde_json::Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { prefix.to_string() } else { format!("{prefix}.{inner}") };
        ConfigError::new(path, e.into_inner().to_string())
    })
}

/// Parses a JSON document. `command` may come from the document or from
/// the caller (the subcommand); when both are present they must agree. An
/// empty or whitespace-only document means all defaults.
pub fn parse_config(document: &str, command: Option<Command>) -> Result<RunConfig, ConfigError> {
    let text = if document.trim().is_empty() { "{}" } else { document };
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError::new("", format!("malformed JSON: {e}")))?;
    let raw: RawConfig = from_value(value, "")?;
    let command = match (raw.command, command) {
        (Some(a), Some(b)) if a != b => {
            return Err(ConfigError::new("command", format!("document says `{a}` but `{b}` was requested")))
        }
        (Some(c), _) | (None, Some(c)) => c,
        (None, None) => return Err(ConfigError::new("command", "no command given")),
    };
    let params = raw.parameters.unwrap_or_else(|| serde_json::json!({}));
    let parameters = match command {
        Command::Certify => Parameters::Certify(from_value(params, "parameters")?),
        Command::Solve => Parameters::Solve(from_value(params, "parameters")?),
        Command::Volterra => Parameters::Volterra(from_value(params, "parameters")?),
        Command::BieleckiCheck => Parameters::BieleckiCheck(from_value(params, "parameters")?),
        Command::Example => Parameters::Example(from_value(params, "parameters")?),
    };
    let cfg = RunConfig { command, seed: raw.seed.unwrap_or(EXAMPLE_SEED), out: raw.out, parameters };
    cfg.validate()?;
    Ok(cfg)
}

/// Command-line overrides applied on top of the document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n_cells: Option<usize>,
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub k: Option<KChoice>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        let cmd = self.command;
        let reject = |flag: &str| Err(ConfigError::new(flag, format!("not applicable to `{cmd}`")));
        match &mut self.parameters {
            Parameters::Volterra(v) => {
                if let Some(n) = o.n_cells {
                    v.n_cells = n;
                }
                if let Some(p) = o.p {
                    v.p = p;
                }
                if let Some(k) = o.k {
                    v.k = k;
                }
                if let Some(a) = o.alpha {
                    match &mut v.kernel {
                        KernelSpec::LogPower { alpha } => *alpha = a,
                        _ => return reject("--alpha"),
                    }
                }
            }
            Parameters::BieleckiCheck(b) => {
                if let Some(n) = o.n_cells {
                    b.n_cells = n;
                }
                if let Some(p) = o.p {
                    b.exponents = vec![p];
                }
                match o.k {
                    Some(KChoice::Fixed(k)) => b.rates = vec![k],
                    Some(KChoice::Auto) => return reject("--k auto"),
                    None => {}
                }
                if o.alpha.is_some() {
                    return reject("--alpha");
                }
            }
            Parameters::Solve(s) => {
                if let Some(p) = o.p {
                    s.eta = EtaSpec::Power { p };
                }
                if o.n_cells.is_some() {
                    return reject("--n-cells");
                }
                if o.alpha.is_some() {
                    return reject("--alpha");
                }
                if o.k.is_some() {
                    return reject("--k");
                }
            }
            Parameters::Certify(_) | Parameters::Example(_) => {
                for (flag, set) in [
                    ("--n-cells", o.n_cells.is_some()),
                    ("--alpha", o.alpha.is_some()),
                    ("--p", o.p.is_some()),
                    ("--k", o.k.is_some()),
                ] {
                    if set {
                        return reject(flag);
                    }
                }
            }
        }
        self.validate()
    }

    /// Range checks beyond what the JSON types enforce.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let exponent = |path: &str, p: f64| {
            if p.is_finite() && p >= 2.0 {
                Ok(())
            } else {
                Err(ConfigError::new(path, format!("exponent p must satisfy p >= 2, got {p}")))
            }
        };
        let positive = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(path, format!("must be positive, got {v}")))
            }
        };
        match &self.parameters {
            Parameters::Certify(c) => {
                positive("parameters.box_half_width", c.box_half_width)?;
                positive("parameters.growth_radius", c.growth_radius)?;
                if c.radii.len() < 2 {
                    return Err(ConfigError::new("parameters.radii", "need at least two radii"));
                }
                c.map.check("parameters.map")?;
            }
            Parameters::Solve(s) => {
                if let EtaSpec::Power { p } = s.eta {
                    exponent("parameters.eta.p", p)?;
                }
                positive("parameters.tol_residual", s.tol_residual)?;
                positive("parameters.tol_gradient", s.tol_gradient)?;
                s.map.check("parameters.map")?;
            }
            Parameters::Volterra(v) => {
                exponent("parameters.p", v.p)?;
                if v.n_cells < 8 {
                    return Err(ConfigError::new("parameters.n_cells", format!("need at least 8 cells, got {}", v.n_cells)));
                }
                if let KChoice::Fixed(k) = v.k {
                    positive("parameters.k", k)?;
                }
                if let KernelSpec::LogPower { alpha } = v.kernel {
                    positive("parameters.kernel.alpha", alpha)?;
                }
                positive("parameters.agreement_tolerance", v.agreement_tolerance)?;
            }
            Parameters::BieleckiCheck(b) => {
                for (i, p) in b.exponents.iter().enumerate() {
                    exponent(&format!("parameters.exponents[{i}]"), *p)?;
                }
                for (i, k) in b.rates.iter().enumerate() {
                    positive(&format!("parameters.rates[{i}]"), *k)?;
                }
                if b.n_cells < 2 {
                    return Err(ConfigError::new("parameters.n_cells", "need at least 2 cells"));
                }
            }
            Parameters::Example(_) => {}
        }
        Ok(())
    }
}

/// Scalar nonlinearities for componentwise maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarFunction {
    Identity,
    Square,
    Cube,
    /// `x³ + x`
    CubePlusLinear,
    Arctan,
    Sinh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    /// `F(x, y) = (x³ + y + 1, 6x + y + y³ + 1)`.
    CubicExample,
    /// `v ↦ Av − F(v)` for the cubic example.
    ExampleResidual,
    Componentwise {
        function: ScalarFunction,
        #[serde(default = "one")]
        dim: usize,
    },
    /// `x ↦ Mx`, rows of `M`.
    Linear { matrix: Vec<Vec<f64>> },
    /// `v ↦ Av − F(v)`.
    Residual { a: Vec<Vec<f64>>, f: Box<MapSpec> },
}

impl MapSpec {
    fn check(&self, path: &str) -> Result<(), ConfigError> {
        match self {
            MapSpec::Componentwise { dim, .. } if *dim == 0 => Err(ConfigError::new(format!("{path}.dim"), "must be positive")),
            MapSpec::Linear { matrix } => check_square(matrix, &format!("{path}.matrix")),
            MapSpec::Residual { a, f } => {
                check_square(a, &format!("{path}.a"))?;
                f.check(&format!("{path}.f"))
            }
            _ => Ok(()),
        }
    }
}

fn check_square(m: &[Vec<f64>], path: &str) -> Result<(), ConfigError> {
    if m.is_empty() || m.iter().any(|r| r.len() != m.len()) {
        return Err(ConfigError::new(path, "matrix must be square and nonempty"));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ConfigError::new(path, "matrix entries must be finite"));
    }
    Ok(())
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyParams {
    pub map: MapSpec,
    /// Rows of `A`; the example matrix when absent.
    pub a: Option<Vec<Vec<f64>>>,
    pub box_half_width: f64,
    pub grid_per_axis: usize,
    pub random_samples: usize,
    pub radii: Vec<f64>,
    pub samples_per_radius: usize,
    pub growth_radius: f64,
    pub growth_samples: usize,
    pub power_coeff: f64,
    pub power_exponent: f64,
    pub linear_b: Option<f64>,
}

impl Default for CertifyParams {
    fn default() -> Self {
        let s = crate::algebraic::CertifySettings::default();
        Self {
            map: MapSpec::CubicExample,
            a: Some(vec![vec![-2.0, 1.0], vec![6.0, -3.0]]),
            box_half_width: s.box_half_width,
            grid_per_axis: s.grid.grid_per_axis,
            random_samples: s.grid.random,
            radii: s.radii,
            samples_per_radius: s.samples_per_radius,
            growth_radius: s.growth_radius,
            growth_samples: s.growth_samples.samples,
            power_coeff: s.power_coeff,
            power_exponent: s.power_exponent,
            linear_b: s.linear_b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaSpec {
    /// `½‖v‖²`
    Quadratic,
    /// `(1/p)Σ|vᵢ|ᵖ`
    Power { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StartSpec {
    Points(Vec<Vec<f64>>),
    /// Seeded uniform starts in `[−half_width, half_width]^dim`.
    Random { count: usize, half_width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveParams {
    pub map: MapSpec,
    /// Zero when absent.
    pub target: Option<Vec<f64>>,
    pub eta: EtaSpec,
    pub tol_residual: f64,
    pub tol_gradient: f64,
    pub max_iters: usize,
    pub starts: StartSpec,
}

impl Default for SolveParams {
    fn default() -> Self {
        let d = crate::solver::SolveConfig::default();
        Self {
            map: MapSpec::ExampleResidual,
            target: None,
            eta: EtaSpec::Quadratic,
            tol_residual: d.tol_residual,
            tol_gradient: d.tol_gradient,
            max_iters: d.max_iters,
            starts: StartSpec::Random { count: 16, half_width: 5.0 },
        }
    }
}

/// `k` for the Bielecki weight: a number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KChoice {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for KChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            Ok(KChoice::Auto)
        } else {
            s.parse::<f64>().map(KChoice::Fixed).map_err(|_| format!("expected a number or `auto`, got `{s}`"))
        }
    }
}

impl Serialize for KChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            KChoice::Auto => s.serialize_str("auto"),
            KChoice::Fixed(k) => s.serialize_f64(*k),
        }
    }
}

impl<'de> Deserialize<'de> for KChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(k) => Ok(KChoice::Fixed(k)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `α(t−τ)^{5/2} ln(1 + (t−τ)²x²)`
    LogPower { alpha: f64 },
    Zero {
        #[serde(default = "one")]
        dim: usize,
    },
    /// `coeff·x`
    Linear {
        coeff: f64,
        #[serde(default = "one")]
        dim: usize,
    },
    /// `x²`, a kernel without a linear envelope.
    Quadratic,
    /// `g(t−τ)·x` with `g` through `(s, g)`.
    Tabulated { s: Vec<f64>, g: Vec<f64> },
    /// Same as `tabulated`, read from a CSV with columns `s,g`.
    TabulatedCsv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    Constant { value: Vec<f64> },
    /// `Σ cᵢtⁱ`
    Polynomial { coeffs: Vec<f64> },
    Tabulated { t: Vec<f64>, y: Vec<f64> },
    /// CSV with columns `t,y`.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DerivativeSpec {
    pub direction: ForcingSpec,
    pub eps: Vec<f64>,
}

impl Default for DerivativeSpec {
    fn default() -> Self {
        Self { direction: ForcingSpec::Polynomial { coeffs: vec![0.0, 1.0] }, eps: vec![1e-2, 1e-3, 1e-4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolterraParams {
    pub kernel: KernelSpec,
    pub forcing: ForcingSpec,
    pub n_cells: usize,
    pub p: f64,
    pub k: KChoice,
    /// Also minimize the weighted functional and compare with marching.
    pub variational: bool,
    pub tol_residual: f64,
    pub max_iters: usize,
    /// Sup-norm bound for marching vs. variational.
    pub agreement_tolerance: f64,
    pub derivative: Option<DerivativeSpec>,
    /// Observed order from `n`, `2n`, `4n` cell runs.
    pub convergence: bool,
    pub hypotheses: KernelSampling,
}

impl Default for VolterraParams {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::LogPower { alpha: 1.0 },
            forcing: ForcingSpec::Constant { value: vec![1.0] },
            n_cells: 256,
            p: 2.0,
            k: KChoice::Auto,
            variational: true,
            tol_residual: 1e-10,
            max_iters: 200,
            agreement_tolerance: 1e-3,
            derivative: Some(DerivativeSpec::default()),
            convergence: true,
            hypotheses: KernelSampling::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BieleckiCheckParams {
    pub functions: usize,
    pub exponents: Vec<f64>,
    pub rates: Vec<f64>,
    pub n_cells: usize,
}

impl Default for BieleckiCheckParams {
    fn default() -> Self {
        Self { functions: 100, exponents: vec![2.0, 3.0], rates: vec![0.5, 1.0, 5.0], n_cells: 512 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleParams {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_solve_config_echoes_defaults() {
        let cfg = parse_config("", Some(Command::Solve)).unwrap();
        let v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(v["parameters"]["tol_residual"], 1e-10);
        assert_eq!(v["parameters"]["max_iters"], 500);
        assert_eq!(v["seed"], 47);
    }

    #[test]
    fn rejects_small_exponent_with_path() {
        let e = parse_config(r#"{"parameters": {"p": 1.5}}"#, Some(Command::Volterra)).unwrap_err();
        assert_eq!(e.path, "parameters.p");
        assert!(e.message.contains("p >= 2"));
    }

    #[test]
    fn rejects_negative_cells_and_unknown_keys() {
        let e = parse_config(r#"{"parameters": {"n_cells": -4}}"#, Some(Command::Volterra)).unwrap_err();
        assert_eq!(e.path, "parameters.n_cells");
        let e = parse_config(r#"{"parameters": {"kernel": {"kind": "zero", "size": 2}}}"#, Some(Command::Volterra)).unwrap_err();
        assert!(e.path.starts_with("parameters.kernel"), "{e}");
        let e = parse_config(r#"{"sede": 3}"#, Some(Command::Example)).unwrap_err();
        assert!(e.message.contains("sede"));
    }

    #[test]
    fn command_conflict() {
        assert!(parse_config(r#"{"command": "solve"}"#, Some(Command::Certify)).is_err());
        assert_eq!(parse_config(r#"{"command": "bielecki-check"}"#, None).unwrap().command, Command::BieleckiCheck);
    }

    #[test]
    fn k_choice_round_trip() {
        let cfg = parse_config(r#"{"parameters": {"k": "auto"}}"#, Some(Command::Volterra)).unwrap();
        let Parameters::Volterra(v) = &cfg.parameters else { panic!() };
        assert_eq!(v.k, KChoice::Auto);
        let cfg = parse_config(r#"{"parameters": {"k": 2.5}}"#, Some(Command::Volterra)).unwrap();
        let Parameters::Volterra(v) = &cfg.parameters else { panic!() };
        assert_eq!(v.k, KChoice::Fixed(2.5));
        assert!(parse_config(r#"{"parameters": {"k": "big"}}"#, Some(Command::Volterra)).is_err());
    }

    #[test]
    fn overrides_respect_command() {
        let mut cfg = parse_config("", Some(Command::Volterra)).unwrap();
        cfg.apply(&Overrides { alpha: Some(2.0), n_cells: Some(64), ..Default::default() }).unwrap();
        let Parameters::Volterra(v) = &cfg.parameters else { panic!() };
        assert_eq!((v.kernel.clone(), v.n_cells), (KernelSpec::LogPower { alpha: 2.0 }, 64));
        let mut cfg = parse_config("", Some(Command::Example)).unwrap();
        assert!(cfg.apply(&Overrides { p: Some(3.0), ..Default::default() }).is_err());
        let mut cfg = parse_config("", Some(Command::Volterra)).unwrap();
        assert_eq!(cfg.apply(&Overrides { p: Some(1.0), ..Default::default() }).unwrap_err().path, "parameters.p");
    }
}
