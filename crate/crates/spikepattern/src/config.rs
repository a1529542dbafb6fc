//! Scenario configuration files.
//!
//! A configuration is flat `key = value` text, one pair per line. Blank lines and lines
//! starting with `#` are ignored. Every key is optional and defaults to the single-spike
//! scenario:
//!
//! ```text
//! a1 = 2
//! d1 = 1
//! kappa1 = 3
//! d_w = 6
//! ic.kind = spline          # spline | cos | cosxx | eigenmode | near_trivial
//! ic.s = 0.4
//! ic.eps = 0.1
//! ic.eps1 = 0.05
//! mesh_level = 10
//! scheme = implicit_euler   # implicit_euler | crank_nicolson
//! nonlinear_mode = semi_implicit   # semi_implicit | newton
//! dt = 0.00025
//! t_end = 25
//! snapshot_times = 0, 5, 10, 15, 20, 25
//! ```
//!
//! `ic.eps` is the amplitude for `cos`/`cosxx`; `ic.k` and `ic.amplitude` belong to
//! `eigenmode`, `ic.amplitude` alone to `near_trivial`. With `full_model = true` the
//! receptor-model rates `a, d_c, d_b, d, d_g, alpha, kappa, gamma` replace
//! `a1, d1, kappa1, d_w`. Optional `preset`, `output.csv`, `output.snapshots` and
//! `output.report` complete the schema. Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use spikepattern_core::grid::{CosineForm, PerturbationSpec};
use spikepattern_core::integrator::{IntegratorConfig, NonlinearMode, TimeScheme, DEFAULT_DT};
use spikepattern_core::kinetics::{FullModelParams, ModelParams};

use crate::presets::Preset;

/// Configuration failure.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    /// The file could not be read.
    #[error("cannot read {path}: {source}")]
    Io {
        /// File path.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },
    /// A line is not `key = value`.
    #[error("line {line}: expected `key = value`")]
    Syntax {
        /// 1-based line number.
        line: usize,
    },
    /// Key not in the schema.
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey {
        /// 1-based line number.
        line: usize,
        /// Offending key.
        key: String,
    },
    /// Key given twice.
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey {
        /// 1-based line number.
        line: usize,
        /// Offending key.
        key: String,
    },
    /// A value does not parse.
    #[error("line {line}: invalid value for `{key}`: {message}")]
    InvalidValue {
        /// 1-based line number.
        line: usize,
        /// Key.
        key: String,
        /// What was expected.
        message: String,
    },
    /// A parsed value violates a constraint.
    #[error("`{field}`: {message}")]
    Constraint {
        /// Field name.
        field: &'static str,
        /// Violated constraint.
        message: String,
    },
}

/// Where parameters come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamSource {
    /// The reduced quadruple.
    Reduced(ModelParams),
    /// Receptor-model rates, reduced on use.
    Full(FullModelParams),
}

impl ParamSource {
    /// The reduced parameters.
    pub fn model_params(&self) -> Result<ModelParams, ConfigError> {
        match self {
            Self::Reduced(p) => Ok(*p),
            Self::Full(f) => f.reduce().map_err(|e| ConfigError::Constraint {
                field: "full_model",
                message: e.to_string(),
            }),
        }
    }
}

/// Output locations; relative paths are resolved against `--out`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outputs {
    /// Diagnostics CSV.
    pub csv: Option<PathBuf>,
    /// Snapshot directory.
    pub snapshots: Option<PathBuf>,
    /// Text report.
    pub report: Option<PathBuf>,
}

/// A complete scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Model parameters.
    pub params: ParamSource,
    /// Initial data.
    pub ic: PerturbationSpec,
    /// The mesh has `2^mesh_level` cells.
    pub mesh_level: u32,
    /// Time stepping.
    pub integrator: IntegratorConfig,
    /// Output locations.
    pub outputs: Outputs,
    /// Preset this scenario was built from.
    pub preset: Option<Preset>,
}

/// Default mesh level.
pub const DEFAULT_MESH_LEVEL: u32 = 10;
/// Default final time.
pub const DEFAULT_T_END: f64 = 25.0;
/// Largest accepted mesh level.
pub const MAX_MESH_LEVEL: u32 = 20;

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mut integrator =
            IntegratorConfig::new(TimeScheme::ImplicitEuler, DEFAULT_DT, DEFAULT_T_END);
        integrator.snapshot_times = (0..=5).map(|i| 5.0 * i as f64).collect();
        Self {
            params: ParamSource::Reduced(
                ModelParams::from_values(2.0, 1.0, 3.0, 6.0).expect("positive"),
            ),
            ic: PerturbationSpec::Spline {
                s: 0.4,
                eps: 0.1,
                eps1: 0.05,
            },
            mesh_level: DEFAULT_MESH_LEVEL,
            integrator,
            outputs: Outputs::default(),
            preset: None,
        }
    }
}

const REDUCED_KEYS: [&str; 4] = ["a1", "d1", "kappa1", "d_w"];
const FULL_KEYS: [&str; 8] = ["a", "d_c", "d_b", "d", "d_g", "alpha", "kappa", "gamma"];
const OTHER_KEYS: [&str; 18] = [
    "full_model",
    "ic.kind",
    "ic.s",
    "ic.eps",
    "ic.eps1",
    "ic.k",
    "ic.amplitude",
    "mesh_level",
    "scheme",
    "nonlinear_mode",
    "dt",
    "t_end",
    "snapshot_times",
    "preset",
    "output.csv",
    "output.snapshots",
    "output.report",
    "monitor_stride",
];

struct Entry {
    line: usize,
    value: String,
}

struct Entries(BTreeMap<String, Entry>);

impl Entries {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.0.remove(key)
    }

    fn real(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(e) => e.value.parse().map_err(|_| ConfigError::InvalidValue {
                line: e.line,
                key: key.into(),
                message: "expected a real number".into(),
            }),
        }
    }

    fn integer<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(e) => e.value.parse().map_err(|_| ConfigError::InvalidValue {
                line: e.line,
                key: key.into(),
                message: "expected a non-negative integer".into(),
            }),
        }
    }

    fn choice<T: Copy>(
        &mut self,
        key: &str,
        default: T,
        options: &[(&str, T)],
    ) -> Result<T, ConfigError> {
        let Some(e) = self.take(key) else {
            return Ok(default);
        };
        options
            .iter()
            .find(|(name, _)| *name == e.value)
            .map(|(_, v)| *v)
            .ok_or_else(|| ConfigError::InvalidValue {
                line: e.line,
                key: key.into(),
                message: format!(
                    "expected one of {}",
                    options
                        .iter()
                        .map(|(n, _)| *n)
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            })
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        self.take(key).map(|e| PathBuf::from(e.value))
    }
}

fn constraint(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Constraint {
        field,
        message: message.into(),
    }
}

fn positive(field: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(constraint(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

impl ScenarioConfig {
    /// Parses configuration text. Missing keys take their defaults (or the preset's values
    /// when `preset` is given).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_preset(text, None)
    }

    /// As [`ScenarioConfig::parse`], with `preset` as the base when the text names none.
    pub fn parse_with_preset(text: &str, preset: Option<Preset>) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            let known = REDUCED_KEYS.contains(&key)
                || FULL_KEYS.contains(&key)
                || OTHER_KEYS.contains(&key);
            if !known {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                });
            }
            if map.contains_key(key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.into(),
                });
            }
            map.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.to_string(),
                },
            );
        }
        Self::from_entries(Entries(map), preset)
    }

    fn from_entries(mut e: Entries, default_preset: Option<Preset>) -> Result<Self, ConfigError> {
        let preset = match e.take("preset") {
            None => None,
            Some(entry) => {
                Some(
                    entry
                        .value
                        .parse::<Preset>()
                        .map_err(|m| ConfigError::InvalidValue {
                            line: entry.line,
                            key: "preset".into(),
                            message: m,
                        })?,
                )
            }
        }
        .or(default_preset);
        let base = preset.map_or_else(Self::default, |p| p.scenario());

        let full = e.choice("full_model", false, &[("true", true), ("false", false)])?;
        let params = if full {
            if let Some(k) = REDUCED_KEYS.iter().find(|k| e.0.contains_key(**k)) {
                let line = e.0[*k].line;
                return Err(ConfigError::InvalidValue {
                    line,
                    key: (*k).into(),
                    message: "reduced parameters cannot be combined with full_model = true".into(),
                });
            }
            let mut v = [0.0; 8];
            for (slot, key) in v.iter_mut().zip(FULL_KEYS) {
                *slot = match e.take(key) {
                    None => return Err(constraint("full_model", format!("missing `{key}`"))),
                    Some(entry) => entry.value.parse().map_err(|_| ConfigError::InvalidValue {
                        line: entry.line,
                        key: key.into(),
                        message: "expected a real number".into(),
                    })?,
                };
            }
            let f = FullModelParams {
                a: v[0],
                d_c: v[1],
                d_b: v[2],
                d: v[3],
                d_g: v[4],
                alpha: v[5],
                kappa: v[6],
                gamma: v[7],
            };
            let source = ParamSource::Full(f);
            source.model_params()?;
            source
        } else {
            if let Some(k) = FULL_KEYS.iter().find(|k| e.0.contains_key(**k)) {
                let line = e.0[*k].line;
                return Err(ConfigError::InvalidValue {
                    line,
                    key: (*k).into(),
                    message: "receptor-model rates require full_model = true".into(),
                });
            }
            let d = base.params.model_params()?;
            let k = d.kinetics;
            let a1 = positive("a1", e.real("a1", k.a1())?)?;
            let d1 = positive("d1", e.real("d1", k.d1())?)?;
            let kappa1 = positive("kappa1", e.real("kappa1", k.kappa1())?)?;
            let d_w = positive("d_w", e.real("d_w", d.d_w())?)?;
            ParamSource::Reduced(
                ModelParams::from_values(a1, d1, kappa1, d_w)
                    .map_err(|err| constraint("params", err.to_string()))?,
            )
        };

        let ic = parse_ic(&mut e, base.ic)?;

        let mesh_level = e.integer("mesh_level", base.mesh_level)?;
        if !(1..=MAX_MESH_LEVEL).contains(&mesh_level) {
            return Err(constraint(
                "mesh_level",
                format!("must lie in 1..={MAX_MESH_LEVEL}, got {mesh_level}"),
            ));
        }

        let bi = &base.integrator;
        let scheme = e.choice(
            "scheme",
            bi.scheme,
            &[
                ("implicit_euler", TimeScheme::ImplicitEuler),
                ("crank_nicolson", TimeScheme::CrankNicolson),
            ],
        )?;
        let nonlinear_mode = e.choice(
            "nonlinear_mode",
            bi.nonlinear_mode,
            &[
                ("semi_implicit", NonlinearMode::SemiImplicit),
                ("newton", NonlinearMode::DEFAULT_NEWTON),
            ],
        )?;
        let dt = positive("dt", e.real("dt", bi.dt)?)?;
        let t_end = positive("t_end", e.real("t_end", bi.t_end)?)?;
        let snapshot_times = match e.take("snapshot_times") {
            None if t_end == bi.t_end => bi.snapshot_times.clone(),
            None => vec![t_end],
            Some(entry) => entry
                .value
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ConfigError::InvalidValue {
                    line: entry.line,
                    key: "snapshot_times".into(),
                    message: "expected a comma-separated list of reals".into(),
                })?,
        };
        let monitor_stride = e.integer("monitor_stride", bi.monitor_stride)?;
        let integrator = IntegratorConfig {
            scheme,
            nonlinear_mode,
            dt,
            t_end,
            snapshot_times,
            monitor_stride,
            dynamics: bi.dynamics,
        };
        integrator
            .validate()
            .map_err(|err| constraint("integrator", err.to_string()))?;

        let outputs = Outputs {
            csv: e.path("output.csv").or(base.outputs.csv),
            snapshots: e.path("output.snapshots").or(base.outputs.snapshots),
            report: e.path("output.report").or(base.outputs.report),
        };
        debug_assert!(e.0.is_empty(), "unconsumed keys {:?}", e.0.keys());

        Ok(Self {
            params,
            ic,
            mesh_level,
            integrator,
            outputs,
            preset,
        })
    }

    /// The reduced parameters.
    pub fn model_params(&self) -> Result<ModelParams, ConfigError> {
        self.params.model_params()
    }

    /// Canonical text form; [`ScenarioConfig::parse`] reads it back to an equal value.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(p) = self.preset {
            put("preset", p.name().into());
        }
        match self.params {
            ParamSource::Reduced(p) => {
                put("a1", real(p.kinetics.a1()));
                put("d1", real(p.kinetics.d1()));
                put("kappa1", real(p.kinetics.kappa1()));
                put("d_w", real(p.d_w()));
            }
            ParamSource::Full(f) => {
                put("full_model", "true".into());
                for (k, v) in FULL_KEYS
                    .iter()
                    .zip([f.a, f.d_c, f.d_b, f.d, f.d_g, f.alpha, f.kappa, f.gamma])
                {
                    put(k, real(v));
                }
            }
        }
        match self.ic {
            PerturbationSpec::Spline { s, eps, eps1 } => {
                put("ic.kind", "spline".into());
                put("ic.s", real(s));
                put("ic.eps", real(eps));
                put("ic.eps1", real(eps1));
            }
            PerturbationSpec::Cosine { form, eps } => {
                let kind = match form {
                    CosineForm::Linear => "cos",
                    CosineForm::Quadratic => "cosxx",
                };
                put("ic.kind", kind.into());
                put("ic.eps", real(eps));
            }
            PerturbationSpec::Eigenmode { k, amplitude } => {
                put("ic.kind", "eigenmode".into());
                put("ic.k", k.to_string());
                put("ic.amplitude", real(amplitude));
            }
            PerturbationSpec::NearTrivial { amplitude } => {
                put("ic.kind", "near_trivial".into());
                put("ic.amplitude", real(amplitude));
            }
        }
        put("mesh_level", self.mesh_level.to_string());
        let i = &self.integrator;
        put(
            "scheme",
            match i.scheme {
                TimeScheme::ImplicitEuler => "implicit_euler",
                TimeScheme::CrankNicolson => "crank_nicolson",
            }
            .into(),
        );
        put(
            "nonlinear_mode",
            match i.nonlinear_mode {
                NonlinearMode::SemiImplicit => "semi_implicit",
                NonlinearMode::Newton { .. } => "newton",
            }
            .into(),
        );
        put("dt", real(i.dt));
        put("t_end", real(i.t_end));
        put(
            "snapshot_times",
            i.snapshot_times
                .iter()
                .map(|&t| real(t))
                .collect::<Vec<_>>()
                .join(", "),
        );
        put("monitor_stride", i.monitor_stride.to_string());
        for (k, v) in [
            ("output.csv", &self.outputs.csv),
            ("output.snapshots", &self.outputs.snapshots),
            ("output.report", &self.outputs.report),
        ] {
            if let Some(p) = v {
                put(k, p.display().to_string());
            }
        }
        s
    }
}

/// Shortest text that parses back to the same `f64`.
fn real(v: f64) -> String {
    format!("{v:?}")
}

fn parse_ic(e: &mut Entries, base: PerturbationSpec) -> Result<PerturbationSpec, ConfigError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Kind {
        Spline,
        Cos,
        CosXX,
        Eigenmode,
        NearTrivial,
    }
    let base_kind = match base {
        PerturbationSpec::Spline { .. } => Kind::Spline,
        PerturbationSpec::Cosine {
            form: CosineForm::Linear,
            ..
        } => Kind::Cos,
        PerturbationSpec::Cosine { .. } => Kind::CosXX,
        PerturbationSpec::Eigenmode { .. } => Kind::Eigenmode,
        PerturbationSpec::NearTrivial { .. } => Kind::NearTrivial,
    };
    let kind = e.choice(
        "ic.kind",
        base_kind,
        &[
            ("spline", Kind::Spline),
            ("cos", Kind::Cos),
            ("cosxx", Kind::CosXX),
            ("eigenmode", Kind::Eigenmode),
            ("near_trivial", Kind::NearTrivial),
        ],
    )?;
    // Defaults come from the base only when the kind is unchanged.
    let same = kind == base_kind;
    let spec = match kind {
        Kind::Spline => {
            let (s0, e0, e10) = match base {
                PerturbationSpec::Spline { s, eps, eps1 } if same => (s, eps, eps1),
                _ => (0.4, 0.1, 0.05),
            };
            let s = e.real("ic.s", s0)?;
            let eps = positive("ic.eps", e.real("ic.eps", e0)?)?;
            let eps1 = e.real("ic.eps1", e10)?;
            if !(s - eps > 0.0 && s + eps < 1.0) {
                return Err(constraint("ic.s", "need 0 < s - eps and s + eps < 1"));
            }
            PerturbationSpec::Spline { s, eps, eps1 }
        }
        Kind::Cos | Kind::CosXX => {
            let e0 = match base {
                PerturbationSpec::Cosine { eps, .. } if same => eps,
                _ => 0.05,
            };
            let form = if kind == Kind::Cos {
                CosineForm::Linear
            } else {
                CosineForm::Quadratic
            };
            PerturbationSpec::Cosine {
                form,
                eps: e.real("ic.eps", e0)?,
            }
        }
        Kind::Eigenmode => {
            let (k0, a0) = match base {
                PerturbationSpec::Eigenmode { k, amplitude } if same => (k, amplitude),
                _ => (1, 0.01),
            };
            PerturbationSpec::Eigenmode {
                k: e.integer("ic.k", k0)?,
                amplitude: e.real("ic.amplitude", a0)?,
            }
        }
        Kind::NearTrivial => {
            let a0 = match base {
                PerturbationSpec::NearTrivial { amplitude } if same => amplitude,
                _ => 0.2,
            };
            PerturbationSpec::NearTrivial {
                amplitude: positive("ic.amplitude", e.real("ic.amplitude", a0)?)?,
            }
        }
    };
    for key in ["ic.s", "ic.eps", "ic.eps1", "ic.k", "ic.amplitude"] {
        if let Some(entry) = e.take(key) {
            return Err(ConfigError::InvalidValue {
                line: entry.line,
                key: key.into(),
                message: "not used by this ic.kind".into(),
            });
        }
    }
    Ok(spec)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    load_config_with_preset(path, None)
}

/// As [`load_config`], with `preset` as the base when the file names none.
pub fn load_config_with_preset(
    path: &Path,
    preset: Option<Preset>,
) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::parse_with_preset(&text, preset)
}
