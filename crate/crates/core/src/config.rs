//! Run configuration: a TOML document, every key optional except `command`.
//!
//! ```toml
//! command = "sweep"
//!
//! [params]
//! phi = [1e4, 1e5, 1e6]   # a scalar is accepted for any list
//! L = 1.0
//! n = [1, 2, 4]
//!
//! [thresholds]
//! c_tilde = 1.0
//! eps1 = 0.1
//!
//! [solver]
//! kind = "clamped"        # slip | clamped | decomposition | high_freq
//! nodes = 256             # overrides the resolution rule
//! nx = 32
//! tol = 1e-10
//! max_iter = 100
//! method = "direct"       # direct | dealiased
//! seed = 7
//! rho_max = 40.0         # wall-layer domain length; default max(40, 3β)
//!
//! [forcing]
//! profiles = ["even_rhs"] # even_rhs | odd_rhs | streamwise | random_<k>
//! random = 0              # extra random profiles appended to the list
//! norm = 1.0              # ‖F‖ of the nonlinear forcing
//! active = 4              # forced Fourier modes of the nonlinear forcing
//!
//! [sweep]
//! sanity_factor = 100.0
//!
//! [appendix]
//! count = 1000
//! degree = 12
//! deltas = [0.25, 1.0, 1.9]
//!
//! [probe]
//! active = 3
//! amplitude = 0.1         # ‖v₂‖_{H¹} = amplitude · Φ^{1/90}
//!
//! [output]
//! dir = "out"
//! formats = ["csv", "json", "profile-tables"]
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::appendix::AppendixSpec;
use crate::channel::RegimeThresholds;
use crate::error::{LabError, Result};
use crate::nonlinear::{ConvolutionMethod, PicardOptions, DEFAULT_NX};
use crate::scaling::{ForcingProfile, SolverKind, DEFAULT_SANITY_FACTOR};
use crate::spectral::{MAX_NODES, MIN_NODES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveLinear,
    SolveNonlinear,
    Decompose,
    Sweep,
    VerifyLemmas,
    ProbeUniqueness,
    BlProfile,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::SolveLinear,
        Command::SolveNonlinear,
        Command::Decompose,
        Command::Sweep,
        Command::VerifyLemmas,
        Command::ProbeUniqueness,
        Command::BlProfile,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::SolveLinear => "solve-linear",
            Command::SolveNonlinear => "solve-nonlinear",
            Command::Decompose => "decompose",
            Command::Sweep => "sweep",
            Command::VerifyLemmas => "verify-lemmas",
            Command::ProbeUniqueness => "probe-uniqueness",
            Command::BlProfile => "bl-profile",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown command {s:?}")))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamGrid {
    #[serde(deserialize_with = "one_or_many")]
    pub phi: Vec<f64>,
    #[serde(rename = "L", deserialize_with = "one_or_many")]
    pub l: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<i64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid {
            phi: vec![1e4],
            l: vec![1.0],
            n: vec![1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverKnobs {
    pub kind: SolverKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    pub nx: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub method: ConvolutionMethod,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_max: Option<f64>,
}

impl Default for SolverKnobs {
    fn default() -> Self {
        let p = PicardOptions::default();
        SolverKnobs {
            kind: SolverKind::Clamped,
            nodes: None,
            nx: DEFAULT_NX,
            tol: p.tol,
            max_iter: p.max_iter,
            method: p.method,
            seed: 7,
            rho_max: None,
        }
    }
}

impl SolverKnobs {
    pub fn picard(&self) -> PicardOptions {
        PicardOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            method: self.method,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingSpec {
    #[serde(deserialize_with = "one_or_many")]
    pub profiles: Vec<String>,
    pub random: usize,
    pub norm: f64,
    pub active: usize,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec {
            profiles: vec!["even_rhs".into()],
            random: 0,
            norm: 1.0,
            active: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepKnobs {
    pub sanity_factor: f64,
}

impl Default for SweepKnobs {
    fn default() -> Self {
        SweepKnobs {
            sanity_factor: DEFAULT_SANITY_FACTOR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppendixKnobs {
    pub count: usize,
    pub degree: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub deltas: Vec<f64>,
}

impl Default for AppendixKnobs {
    fn default() -> Self {
        let d = AppendixSpec::default();
        AppendixKnobs {
            count: d.count,
            degree: d.degree,
            deltas: d.deltas,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeKnobs {
    pub active: usize,
    pub amplitude: f64,
}

impl Default for ProbeKnobs {
    fn default() -> Self {
        ProbeKnobs {
            active: 3,
            amplitude: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    ProfileTables,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            formats: vec![Format::Csv, Format::Json, Format::ProfileTables],
        }
    }
}

impl OutputSpec {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub command: Command,
    #[serde(default)]
    pub params: ParamGrid,
    #[serde(default)]
    pub thresholds: RegimeThresholds,
    #[serde(default)]
    pub solver: SolverKnobs,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub sweep: SweepKnobs,
    #[serde(default)]
    pub appendix: AppendixKnobs,
    #[serde(default)]
    pub probe: ProbeKnobs,
    #[serde(default)]
    pub output: OutputSpec,
}

/// The same document with `command` optional, for the CLI where the
/// subcommand supplies it.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    command: Option<Command>,
    #[serde(default)]
    params: ParamGrid,
    #[serde(default)]
    thresholds: RegimeThresholds,
    #[serde(default)]
    solver: SolverKnobs,
    #[serde(default)]
    forcing: ForcingSpec,
    #[serde(default)]
    sweep: SweepKnobs,
    #[serde(default)]
    appendix: AppendixKnobs,
    #[serde(default)]
    probe: ProbeKnobs,
    #[serde(default)]
    output: OutputSpec,
}

impl RunSpec {
    pub fn with_command(command: Command) -> Self {
        RunSpec {
            command,
            params: ParamGrid::default(),
            thresholds: RegimeThresholds::default(),
            solver: SolverKnobs::default(),
            forcing: ForcingSpec::default(),
            sweep: SweepKnobs::default(),
            appendix: AppendixKnobs::default(),
            probe: ProbeKnobs::default(),
            output: OutputSpec::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run spec serializes")
    }

    /// Range checks that the document syntax cannot express.
    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        let p = &self.params;
        if let Some(v) = p.phi.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(LabError::param("params.phi", format!("flux must be finite and > 0, got {v}")));
        }
        if let Some(v) = p.l.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(LabError::param("params.L", format!("must be finite and > 0, got {v}")));
        }
        if self.command != Command::VerifyLemmas {
            if p.phi.is_empty() {
                return Err(LabError::param("params.phi", "empty flux grid"));
            }
            if p.l.is_empty() {
                return Err(LabError::param("params.L", "empty period grid"));
            }
            if p.n.is_empty() {
                return Err(LabError::param("params.n", "empty mode grid"));
            }
        }
        if matches!(self.command, Command::SolveLinear | Command::Decompose | Command::BlProfile | Command::Sweep)
            && p.n.contains(&0)
        {
            return Err(LabError::param("params.n", "mode 0 has no wall layer; use n != 0"));
        }
        if matches!(self.command, Command::SolveNonlinear | Command::ProbeUniqueness) && (p.phi.len() != 1 || p.l.len() != 1) {
            return Err(LabError::param("params", "this command takes a single phi and a single L"));
        }
        let s = &self.solver;
        if let Some(n) = s.nodes {
            if !(MIN_NODES..=MAX_NODES).contains(&n) || n % 2 == 1 {
                return Err(LabError::param(
                    "solver.nodes",
                    format!("must be even and in {MIN_NODES}..={MAX_NODES}, got {n}"),
                ));
            }
        }
        if s.nx == 0 {
            return Err(LabError::param("solver.nx", "need at least one Fourier mode"));
        }
        self.solver.picard().validate()?;
        if let Some(r) = s.rho_max {
            if !(r.is_finite() && r >= 16.0) {
                return Err(LabError::param("solver.rho_max", format!("must be >= 16, got {r}")));
            }
        }
        for name in &self.forcing.profiles {
            ForcingProfile::by_name(name, s.seed)?;
        }
        if self.forcing.profiles.is_empty() && self.forcing.random == 0 {
            return Err(LabError::param("forcing.profiles", "empty forcing ensemble"));
        }
        if !(self.forcing.norm >= 0.0 && self.forcing.norm.is_finite()) {
            return Err(LabError::param("forcing.norm", "must be finite and >= 0"));
        }
        if !(self.sweep.sanity_factor >= 1.0) {
            return Err(LabError::param("sweep.sanity_factor", "must be >= 1"));
        }
        self.appendix_spec().validate()?;
        if !(self.probe.amplitude > 0.0 && self.probe.amplitude.is_finite()) {
            return Err(LabError::param("probe.amplitude", "must be finite and > 0"));
        }
        if self.probe.active == 0 {
            return Err(LabError::param("probe.active", "need at least one active mode"));
        }
        Ok(())
    }

    pub fn appendix_spec(&self) -> AppendixSpec {
        AppendixSpec {
            count: self.appendix.count,
            degree: self.appendix.degree,
            deltas: self.appendix.deltas.clone(),
            seed: self.solver.seed,
        }
    }

    /// Named profiles followed by `forcing.random` random ones.
    pub fn forcing_profiles(&self) -> Result<Vec<ForcingProfile>> {
        let mut v = self
            .forcing
            .profiles
            .iter()
            .map(|p| ForcingProfile::by_name(p, self.solver.seed))
            .collect::<Result<Vec<_>>>()?;
        let start = v.len();
        v.extend((0..self.forcing.random).map(|i| ForcingProfile::random(self.solver.seed, start + i)));
        Ok(v)
    }
}

fn config_error(e: toml::de::Error) -> LabError {
    LabError::Config(e.to_string().trim_end().to_string())
}

/// Parses a complete document; `command` is required.
pub fn parse_config(text: &str) -> Result<RunSpec> {
    parse_with_command(text, None)
}

/// Parses a document, taking `command` from `fallback` when the document
/// has none. A document command that disagrees with `fallback` is an error.
pub fn parse_with_command(text: &str, fallback: Option<Command>) -> Result<RunSpec> {
    let spec = parse_document(text, fallback)?;
    spec.validate()?;
    Ok(spec)
}

/// Like [`parse_with_command`] without the semantic checks, for callers
/// that apply overrides before validating.
pub fn parse_document(text: &str, fallback: Option<Command>) -> Result<RunSpec> {
    let raw: RawSpec = toml::from_str(text).map_err(config_error)?;
    let command = match (raw.command, fallback) {
        (Some(a), Some(b)) if a != b => {
            return Err(LabError::Config(format!(
                "document command {a} disagrees with the requested command {b}"
            )))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(LabError::Config("missing field `command`".into())),
    };
    let spec = RunSpec {
        command,
        params: raw.params,
        thresholds: raw.thresholds,
        solver: raw.solver,
        forcing: raw.forcing,
        sweep: raw.sweep,
        appendix: raw.appendix,
        probe: raw.probe,
        output: raw.output,
    };
    Ok(spec)
}
