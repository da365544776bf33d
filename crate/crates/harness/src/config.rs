//! Scenario configuration: a flat set of dotted keys in TOML syntax.
//!
//! ```toml
//! scenario = "ww-ref-2level"      # optional preset, fills every key below
//! sweep.epsilons = [0.1, 0.05, 0.025]
//! sweep.lambda_rule = "power"     # λ² = lambda_c · ε^lambda_p
//! output.dir = "out/ref"
//! ```
//!
//! Keys given explicitly override the preset. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use toml::Value;
use wwlab_core::atom::{AtomPath, ConstantAtom, DiagRotation, EigenFrame, FrameOptions, Poly, TabulatedAtom};
use wwlab_core::bath::{BathSpec, Observable};
use wwlab_core::linalg::{c, CMat, CVec, C64};

use crate::error::{Context, HarnessError, Result};

pub const REFERENCE_SCENARIO: &str = "ww-ref-2level";
pub const TIME_INDEPENDENT_SCENARIO: &str = "ww-const-2level";

const KNOWN_KEYS: &[&str] = &[
    "scenario",
    "atom.kind",
    "atom.levels",
    "atom.slopes",
    "atom.theta_rate",
    "atom.coupling",
    "atom.file",
    "atom.t_end",
    "bath.kind",
    "bath.scale",
    "bath.s",
    "bath.omega_c",
    "bath.file",
    "bath.decay_c",
    "bath.decay_m",
    "initial.z0_re",
    "initial.z0_im",
    "sweep.epsilons",
    "sweep.lambda_rule",
    "sweep.lambdas",
    "sweep.lambda_c",
    "sweep.lambda_p",
    "sweep.direction",
    "sweep.fit_variable",
    "sweep.override_smallness",
    "solver.dt_out",
    "solver.tol",
    "solver.tol_corr",
    "solver.volterra_dx",
    "solver.frame_intervals",
    "emission.observable",
    "emission.coeff",
    "emission.power",
    "output.dir",
];

fn preset(name: &str) -> Option<&'static str> {
    match name {
        REFERENCE_SCENARIO => Some(
            r#"
atom.kind = "diag_rotation"
atom.levels = [1.0, 2.0]
atom.slopes = [0.0, 0.3]
atom.theta_rate = 0.7853981633974483
atom.coupling = [1.0, 1.0]
atom.t_end = 1.0
bath.kind = "reference"
initial.z0_re = [1.0, 0.0]
initial.z0_im = [0.0, 0.0]
sweep.epsilons = [0.2, 0.1, 0.05, 0.025]
sweep.lambda_rule = "power"
sweep.lambda_c = 1.0
sweep.lambda_p = 1.0
sweep.direction = "lambda2=eps"
sweep.fit_variable = "epsilon"
sweep.override_smallness = true
solver.dt_out = 0.005
solver.tol = 1e-10
solver.tol_corr = 1e-6
solver.volterra_dx = 0.015625
solver.frame_intervals = 200
emission.observable = "constant"
emission.coeff = 1.0
emission.power = 1
output.dir = "out"
"#,
        ),
        TIME_INDEPENDENT_SCENARIO => Some(
            r#"
atom.kind = "constant"
atom.levels = [1.0, 2.0]
atom.coupling = [1.0, 1.0]
atom.t_end = 20.0
bath.kind = "reference"
initial.z0_re = [0.6, 0.8]
initial.z0_im = [0.0, 0.0]
sweep.epsilons = [1.0]
sweep.lambda_rule = "explicit"
sweep.lambdas = [0.05, 0.025, 0.0125]
sweep.direction = "fixed-eps"
sweep.fit_variable = "lambda"
sweep.override_smallness = false
solver.dt_out = 0.05
solver.tol = 1e-10
solver.tol_corr = 1e-7
solver.volterra_dx = 0.015625
solver.frame_intervals = 200
emission.observable = "constant"
emission.coeff = 1.0
emission.power = 1
output.dir = "out"
"#,
        ),
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub enum AtomSpec {
    /// `R(θ(t)) diag(levels + slopes·t) R(θ(t))ᵀ` with `θ = theta_rate·t`.
    DiagRotation { levels: Vec<f64>, slopes: Vec<f64>, theta_rate: f64, coupling: Vec<C64> },
    Constant { levels: Vec<f64>, coupling: Vec<C64> },
    Tabulated { file: PathBuf },
}

#[derive(Clone, Debug)]
pub enum BathSource {
    Reference,
    Ohmic { scale: f64, s: f64, omega_c: f64 },
    Tabulated { file: PathBuf, decay: Option<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum LambdaRule {
    /// Paired with the ε list; a single entry on either side is broadcast.
    Explicit(Vec<f64>),
    /// `λ² = c·ε^p`.
    Power { c: f64, p: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitVariable {
    Epsilon,
    Lambda,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverSettings {
    pub dt_out: f64,
    pub tol: f64,
    pub tol_corr: f64,
    pub volterra_dx: f64,
    pub frame_intervals: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct EmissionSettings {
    pub observable: String,
    pub coeff: f64,
    pub power: u32,
}

impl EmissionSettings {
    pub fn observable(&self) -> Observable {
        match self.observable.as_str() {
            "power" => Observable::Power { coeff: self.coeff, k: self.power },
            _ => Observable::Constant(self.coeff),
        }
    }
}

/// One `(ε, λ)` point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub index: usize,
    pub eps: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub atom: AtomSpec,
    pub t_end: f64,
    pub bath: BathSource,
    pub z0: CVec,
    pub epsilons: Vec<f64>,
    pub lambda_rule: LambdaRule,
    pub direction: String,
    pub fit_variable: FitVariable,
    pub override_smallness: bool,
    pub solver: SolverSettings,
    pub emission: EmissionSettings,
    pub output_dir: PathBuf,
}

struct Keys {
    map: BTreeMap<String, Value>,
    base: PathBuf,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn parse_table(text: &str) -> Result<BTreeMap<String, Value>> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.message().to_string()))?;
    let mut map = BTreeMap::new();
    flatten("", &table, &mut map);
    Ok(map)
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(HarnessError::bad(key, format!("expected a number, got {v}"))),
    }
}

impl Keys {
    fn get(&self, key: &str) -> Result<&Value> {
        self.map.get(key).ok_or_else(|| HarnessError::MissingKey(key.to_string()))
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn string(&self, key: &str) -> Result<String> {
        match self.get(key)? {
            Value::String(s) => Ok(s.clone()),
            v => Err(HarnessError::bad(key, format!("expected a string, got {v}"))),
        }
    }

    fn float(&self, key: &str) -> Result<f64> {
        as_f64(key, self.get(key)?)
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let x = self.float(key)?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(HarnessError::bad(key, format!("must be positive, got {x}")));
        }
        Ok(x)
    }

    fn boolean(&self, key: &str) -> Result<bool> {
        match self.get(key)? {
            Value::Boolean(b) => Ok(*b),
            v => Err(HarnessError::bad(key, format!("expected true or false, got {v}"))),
        }
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        match self.get(key)? {
            Value::Array(a) => a.iter().map(|v| as_f64(key, v)).collect(),
            v => Ok(vec![as_f64(key, v)?]),
        }
    }

    /// Numbers, or `[re, im]` pairs.
    fn complexes(&self, key: &str) -> Result<Vec<C64>> {
        let Value::Array(a) = self.get(key)? else {
            return Err(HarnessError::bad(key, "expected an array"));
        };
        a.iter()
            .map(|v| match v {
                Value::Array(pair) if pair.len() == 2 => Ok(C64::new(as_f64(key, &pair[0])?, as_f64(key, &pair[1])?)),
                other => Ok(c(as_f64(key, other)?)),
            })
            .collect()
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        let p = PathBuf::from(self.string(key)?);
        Ok(if p.is_absolute() { p } else { self.base.join(p) })
    }
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// Preset scenario by name.
    pub fn builtin(name: &str) -> Result<Self> {
        Self::parse(&format!("scenario = \"{name}\""), Path::new("."))
    }

    /// Parses configuration text; relative file paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let user = parse_table(text)?;
        for key in user.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(HarnessError::Config(format!("unknown key `{key}`")));
            }
        }
        let mut map = BTreeMap::new();
        let name = match user.get("scenario") {
            Some(Value::String(s)) => {
                let text = preset(s).ok_or_else(|| HarnessError::bad("scenario", format!("unknown preset `{s}`")))?;
                map = parse_table(text)?;
                s.clone()
            }
            Some(v) => return Err(HarnessError::bad("scenario", format!("expected a string, got {v}"))),
            None => "custom".to_string(),
        };
        map.extend(user);
        let keys = Keys { map, base: base.to_path_buf() };
        Self::from_keys(name, &keys)
    }

    fn from_keys(name: String, k: &Keys) -> Result<Self> {
        let kind = k.string("atom.kind")?;
        let atom = match kind.as_str() {
            "diag_rotation" => {
                let levels = k.floats("atom.levels")?;
                let slopes = if k.has("atom.slopes") { k.floats("atom.slopes")? } else { vec![0.0; levels.len()] };
                if slopes.len() != levels.len() {
                    return Err(HarnessError::bad("atom.slopes", "length differs from atom.levels"));
                }
                let coupling = k.complexes("atom.coupling")?;
                if coupling.len() != levels.len() {
                    return Err(HarnessError::bad("atom.coupling", "length differs from atom.levels"));
                }
                AtomSpec::DiagRotation { levels, slopes, theta_rate: k.float("atom.theta_rate")?, coupling }
            }
            "constant" => {
                let levels = k.floats("atom.levels")?;
                let coupling = k.complexes("atom.coupling")?;
                if coupling.len() != levels.len() {
                    return Err(HarnessError::bad("atom.coupling", "length differs from atom.levels"));
                }
                AtomSpec::Constant { levels, coupling }
            }
            "tabulated" => AtomSpec::Tabulated { file: k.path("atom.file")? },
            other => return Err(HarnessError::bad("atom.kind", format!("unknown atom kind `{other}`"))),
        };
        let t_end = if k.has("atom.t_end") { k.positive("atom.t_end")? } else { 1.0 };

        let bath = match k.string("bath.kind")?.as_str() {
            "reference" => BathSource::Reference,
            "ohmic" => BathSource::Ohmic {
                scale: k.positive("bath.scale")?,
                s: k.float("bath.s")?,
                omega_c: k.positive("bath.omega_c")?,
            },
            "tabulated" => {
                let decay = match (k.has("bath.decay_c"), k.has("bath.decay_m")) {
                    (true, true) => Some((k.positive("bath.decay_c")?, k.positive("bath.decay_m")?)),
                    (false, false) => None,
                    (true, false) => return Err(HarnessError::MissingKey("bath.decay_m".into())),
                    (false, true) => return Err(HarnessError::MissingKey("bath.decay_c".into())),
                };
                BathSource::Tabulated { file: k.path("bath.file")?, decay }
            }
            other => return Err(HarnessError::bad("bath.kind", format!("unknown bath kind `{other}`"))),
        };

        let re = k.floats("initial.z0_re")?;
        let im = if k.has("initial.z0_im") { k.floats("initial.z0_im")? } else { vec![0.0; re.len()] };
        if im.len() != re.len() {
            return Err(HarnessError::bad("initial.z0_im", "length differs from initial.z0_re"));
        }
        let z0 = CVec::from_iterator(re.len(), re.iter().zip(&im).map(|(a, b)| C64::new(*a, *b)));
        if (z0.norm() - 1.0).abs() > 1e-12 {
            return Err(HarnessError::bad("initial.z0_re", format!("initial state must be normalized, norm {}", z0.norm())));
        }

        let epsilons = k.floats("sweep.epsilons")?;
        if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(HarnessError::bad("sweep.epsilons", "values must lie in (0, 1]"));
        }
        let lambda_rule = match k.string("sweep.lambda_rule")?.as_str() {
            "explicit" => {
                let l = k.floats("sweep.lambdas")?;
                if l.is_empty() || l.iter().any(|x| !(*x >= 0.0)) {
                    return Err(HarnessError::bad("sweep.lambdas", "values must be non-negative"));
                }
                if l.len() != epsilons.len() && l.len() != 1 && epsilons.len() != 1 {
                    return Err(HarnessError::bad("sweep.lambdas", "length must match sweep.epsilons or be 1"));
                }
                LambdaRule::Explicit(l)
            }
            "power" => LambdaRule::Power { c: k.float("sweep.lambda_c")?, p: k.float("sweep.lambda_p")? },
            other => return Err(HarnessError::bad("sweep.lambda_rule", format!("expected explicit or power, got `{other}`"))),
        };
        if let LambdaRule::Power { c, .. } = lambda_rule {
            if c < 0.0 {
                return Err(HarnessError::bad("sweep.lambda_c", "must be non-negative"));
            }
        }
        let fit_variable = match k.string("sweep.fit_variable")?.as_str() {
            "epsilon" => FitVariable::Epsilon,
            "lambda" => FitVariable::Lambda,
            other => return Err(HarnessError::bad("sweep.fit_variable", format!("expected epsilon or lambda, got `{other}`"))),
        };

        let solver = SolverSettings {
            dt_out: k.positive("solver.dt_out")?,
            tol: k.positive("solver.tol")?,
            tol_corr: k.positive("solver.tol_corr")?,
            volterra_dx: k.positive("solver.volterra_dx")?,
            frame_intervals: {
                let n = k.positive("solver.frame_intervals")?;
                if n.fract() != 0.0 || n < 8.0 {
                    return Err(HarnessError::bad("solver.frame_intervals", "must be an integer ≥ 8"));
                }
                n as usize
            },
        };
        let observable = k.string("emission.observable")?;
        if observable != "constant" && observable != "power" {
            return Err(HarnessError::bad("emission.observable", format!("expected constant or power, got `{observable}`")));
        }
        let power = k.float("emission.power")?;
        if power < 0.0 || power.fract() != 0.0 {
            return Err(HarnessError::bad("emission.power", "must be a non-negative integer"));
        }
        let emission = EmissionSettings { observable, coeff: k.float("emission.coeff")?, power: power as u32 };

        let scenario = Scenario {
            name,
            atom,
            t_end,
            bath,
            z0,
            epsilons,
            lambda_rule,
            direction: k.string("sweep.direction")?,
            fit_variable,
            override_smallness: if k.has("sweep.override_smallness") { k.boolean("sweep.override_smallness")? } else { false },
            solver,
            emission,
            output_dir: k.path("output.dir")?,
        };
        if let Some(d) = scenario.declared_dim() {
            if d != scenario.z0.len() {
                return Err(HarnessError::bad("initial.z0_re", format!("length {} differs from atom dimension {d}", scenario.z0.len())));
            }
        }
        Ok(scenario)
    }

    fn declared_dim(&self) -> Option<usize> {
        match &self.atom {
            AtomSpec::DiagRotation { levels, .. } | AtomSpec::Constant { levels, .. } => Some(levels.len()),
            AtomSpec::Tabulated { .. } => None,
        }
    }

    pub fn atom_path(&self) -> Result<Arc<dyn AtomPath>> {
        Ok(match &self.atom {
            AtomSpec::DiagRotation { levels, slopes, theta_rate, coupling } => Arc::new(DiagRotation {
                levels: levels.iter().zip(slopes).map(|(a, b)| Poly(vec![*a, *b])).collect(),
                theta: Poly(vec![0.0, *theta_rate]),
                coupling: coupling.iter().map(|v| vec![*v]).collect(),
            }),
            AtomSpec::Constant { levels, coupling } => Arc::new(ConstantAtom {
                a: CMat::from_diagonal(&CVec::from_iterator(levels.len(), levels.iter().map(|x| c(*x)))),
                v: CVec::from_vec(coupling.clone()),
            }),
            AtomSpec::Tabulated { file } => {
                let atom = TabulatedAtom::from_csv(file).context(|| format!("loading atom table {}", file.display()))?;
                if atom.dim() != self.z0.len() {
                    return Err(HarnessError::bad(
                        "initial.z0_re",
                        format!("length {} differs from atom dimension {}", self.z0.len(), atom.dim()),
                    ));
                }
                Arc::new(atom)
            }
        })
    }

    pub fn frame(&self) -> Result<EigenFrame> {
        let opts = FrameOptions { t_end: self.t_end, intervals: self.solver.frame_intervals, ..Default::default() };
        EigenFrame::new(self.atom_path()?, opts).context(|| "building the eigenframe".to_string())
    }

    pub fn bath_spec(&self) -> Result<BathSpec> {
        match &self.bath {
            BathSource::Reference => Ok(BathSpec::reference()),
            BathSource::Ohmic { scale, s, omega_c } => {
                BathSpec::ohmic(*scale, *s, *omega_c).map_err(|e| HarnessError::bad("bath.s", e.to_string()))
            }
            BathSource::Tabulated { file, decay } => {
                BathSpec::from_csv(file, *decay).context(|| format!("loading bath table {}", file.display()))
            }
        }
    }

    /// Sweep points in configuration order.
    pub fn points(&self) -> Vec<Point> {
        let pairs: Vec<(f64, f64)> = match &self.lambda_rule {
            LambdaRule::Power { c, p } => self.epsilons.iter().map(|&e| (e, (c * e.powf(*p)).sqrt())).collect(),
            LambdaRule::Explicit(l) => {
                let n = self.epsilons.len().max(l.len());
                (0..n)
                    .map(|i| (self.epsilons[i.min(self.epsilons.len() - 1)], l[i.min(l.len() - 1)]))
                    .collect()
            }
        };
        pairs.into_iter().enumerate().map(|(index, (eps, lambda))| Point { index, eps, lambda }).collect()
    }
}
