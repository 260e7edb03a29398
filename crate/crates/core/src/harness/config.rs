//! Experiment configuration.
//!
//! The file is TOML with five optional sections. Every key has a default, so
//! an empty file describes the desk-scale uniform experiment.
//!
//! ```toml
//! [experiment]
//! algo = ["alg2", "alg5", "simple_gd"]   # or a single string
//! model = "stochastic"                   # or "permutation"
//! dist = "uniform"                       # normal, cauchy, permutation-mix, uniform-fixedM
//! support = 20                           # K, or "continuous"
//! general_model = "linear"               # reward model of alg6/alg7: linear or log
//! reps = 20
//! seed = 1
//!
//! [size]
//! T = 2000
//! m = 200
//! q = 10
//! alpha = 0.6
//! rho_coarse = 0.6
//! rho_fine = 0.3
//!
//! [dual]
//! potential = "quadratic"                # or "entropy"
//! gamma = "inv_sqrt"                     # or a positive constant
//! u_bar = 1.5                            # optional test radius of the dual-tested violation
//!
//! [two_stage]
//! delta = 0.05
//! lambda = 1.0
//! theta = 1.0
//! J = "capped"                           # "theory", "capped" or a positive integer
//!
//! [sweep]
//! axis = "T"                             # or "m"
//! values = [500, 1000, 2000]             # or from/to/points, log-spaced
//! ```

use std::fmt::Write as _;

use toml::{Table, Value};

use crate::dual::PotentialKind;
use crate::error::{Error, Result};
use crate::instance::{InputModel, Preset, SupportSize};
use crate::policies::{JRule, TwoStageParams};

pub const DESK_T: usize = 2000;
pub const DESK_M: usize = 200;
pub const DESK_REPS: usize = 20;
pub const FULL_T: usize = 5000;
pub const FULL_M: usize = 2000;
pub const FULL_REPS: usize = 100;
pub const DEFAULT_SWEEP_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algo {
    Alg1,
    Alg2,
    Alg5,
    Alg6,
    Alg7,
    SimpleGd,
}

impl Algo {
    pub const ALL: [Algo; 6] = [Algo::Alg1, Algo::Alg2, Algo::Alg5, Algo::Alg6, Algo::Alg7, Algo::SimpleGd];

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algo '{s}' (expected alg1, alg2, alg5, alg6, alg7, simple_gd)")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algo::Alg1 => "alg1",
            Algo::Alg2 => "alg2",
            Algo::Alg5 => "alg5",
            Algo::Alg6 => "alg6",
            Algo::Alg7 => "alg7",
            Algo::SimpleGd => "simple_gd",
        }
    }

    /// Whether the policy enforces the projected budget exactly.
    pub fn is_gated(&self) -> bool {
        matches!(self, Algo::Alg5 | Algo::Alg7)
    }
}

/// Reward model for the general-model policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneralKind {
    Linear,
    Log,
}

impl GeneralKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "log" => Ok(Self::Log),
            other => Err(Error::Config(format!("unknown general_model '{other}' (expected linear or log)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Log => "log",
        }
    }
}

/// Step size of the single-stage policies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaRule {
    InvSqrt,
    Constant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    T,
    M,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::T => "T",
            SweepAxis::M => "m",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub algos: Vec<Algo>,
    pub model: InputModel,
    pub dist: Preset,
    pub support: SupportSize,
    pub general_model: GeneralKind,
    pub reps: usize,
    pub master_seed: u64,
    pub horizon: usize,
    pub m: usize,
    pub q: usize,
    pub alpha: f64,
    pub rho_coarse: f64,
    pub rho_fine: f64,
    pub potential: PotentialKind,
    pub gamma: GammaRule,
    pub u_bar: Option<f64>,
    pub two_stage: TwoStageParams,
    pub sweep: Option<Sweep>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algos: vec![Algo::Alg2, Algo::Alg5, Algo::SimpleGd],
            model: InputModel::StochasticIid,
            dist: Preset::Uniform,
            support: SupportSize::Finite(20),
            general_model: GeneralKind::Linear,
            reps: DESK_REPS,
            master_seed: 1,
            horizon: DESK_T,
            m: DESK_M,
            q: 10,
            alpha: 0.6,
            rho_coarse: 0.6,
            rho_fine: 0.3,
            potential: PotentialKind::Quadratic,
            gamma: GammaRule::InvSqrt,
            u_bar: None,
            two_stage: TwoStageParams::default(),
            sweep: None,
        }
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("experiment", &["algo", "model", "dist", "support", "general_model", "reps", "seed"]),
    ("size", &["T", "m", "q", "alpha", "rho_coarse", "rho_fine"]),
    ("dual", &["potential", "gamma", "u_bar"]),
    ("two_stage", &["delta", "lambda", "theta", "J"]),
    ("sweep", &["axis", "values", "from", "to", "points"]),
];

fn unknown_keys(table: &Table) -> Vec<String> {
    let mut bad = Vec::new();
    for (section, value) in table {
        let Some((_, keys)) = KEYS.iter().find(|(s, _)| s == section) else {
            bad.push(section.clone());
            continue;
        };
        match value.as_table() {
            Some(inner) => {
                for key in inner.keys() {
                    if !keys.contains(&key.as_str()) {
                        bad.push(format!("{section}.{key}"));
                    }
                }
            }
            None => bad.push(section.clone()),
        }
    }
    bad
}

struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn err(&self, key: &str, want: &str, got: &Value) -> Error {
        Error::Config(format!("{}.{key} must be {want}, got {got}", self.name))
    }

    fn str(&self, key: &str) -> Result<Option<&'a str>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(self.err(key, "a string", v)),
        }
    }

    fn uint(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(v) => Err(self.err(key, "a non-negative integer", v)),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => as_float(v).map(Some).ok_or_else(|| self.err(key, "a number", v)),
        }
    }
}

fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn parse_model(s: &str) -> Result<InputModel> {
    match s {
        "stochastic" => Ok(InputModel::StochasticIid),
        "permutation" => Ok(InputModel::RandomPermutation),
        other => Err(Error::Config(format!("unknown model '{other}' (expected stochastic or permutation)"))),
    }
}

/// `points` log-spaced integers from `from` to `to`, rounded and deduplicated.
pub fn log_spaced(from: usize, to: usize, points: usize) -> Result<Vec<usize>> {
    if from < 1 || to < from {
        return Err(Error::Config(format!("sweep range needs 1 <= from <= to, got {from}..{to}")));
    }
    if points < 1 || (points == 1 && from != to) {
        return Err(Error::Config(format!("sweep needs at least 2 points for a range, got {points}")));
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    let (lo, hi) = ((from as f64).ln(), (to as f64).ln());
    let mut out: Vec<usize> = (0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp().round() as usize)
        .collect();
    out[0] = from;
    out[points - 1] = to;
    out.dedup();
    Ok(out)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid TOML: {e}")))?;
        let bad = unknown_keys(&table);
        if !bad.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", bad.join(", "))));
        }
        let section = |name: &'static str| Section {
            name,
            table: table.get(name).and_then(Value::as_table),
        };
        let mut cfg = Self::default();

        let ex = section("experiment");
        match ex.get("algo") {
            None => {}
            Some(Value::String(s)) => cfg.algos = vec![Algo::parse(s)?],
            Some(Value::Array(items)) => {
                cfg.algos = items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => Algo::parse(s),
                        other => Err(ex.err("algo", "a string or list of strings", other)),
                    })
                    .collect::<Result<_>>()?;
            }
            Some(v) => return Err(ex.err("algo", "a string or list of strings", v)),
        }
        if let Some(s) = ex.str("model")? {
            cfg.model = parse_model(s)?;
        }
        let mut fixed_m = false;
        if let Some(s) = ex.str("dist")? {
            if s == "uniform-fixedM" {
                cfg.dist = Preset::Uniform;
                cfg.m = FULL_M;
                fixed_m = true;
            } else {
                cfg.dist = Preset::parse(s)?;
            }
        }
        match ex.get("support") {
            None => {}
            Some(Value::String(s)) if s == "continuous" => cfg.support = SupportSize::Continuous,
            Some(Value::Integer(k)) if *k >= 1 => cfg.support = SupportSize::Finite(*k as usize),
            Some(v) => return Err(ex.err("support", "a positive integer or \"continuous\"", v)),
        }
        if let Some(s) = ex.str("general_model")? {
            cfg.general_model = GeneralKind::parse(s)?;
        }
        if let Some(n) = ex.uint("reps")? {
            cfg.reps = n;
        }
        if let Some(n) = ex.uint("seed")? {
            cfg.master_seed = n as u64;
        }

        let size = section("size");
        if let Some(n) = size.uint("T")? {
            cfg.horizon = n;
        }
        if let Some(n) = size.uint("m")? {
            if fixed_m && n != FULL_M {
                return Err(Error::Config(format!("dist uniform-fixedM fixes m = {FULL_M}, but size.m = {n}")));
            }
            cfg.m = n;
        }
        if let Some(n) = size.uint("q")? {
            cfg.q = n;
        }
        if let Some(x) = size.float("alpha")? {
            cfg.alpha = x;
        }
        if let Some(x) = size.float("rho_coarse")? {
            cfg.rho_coarse = x;
        }
        if let Some(x) = size.float("rho_fine")? {
            cfg.rho_fine = x;
        }

        let dual = section("dual");
        if let Some(s) = dual.str("potential")? {
            cfg.potential = PotentialKind::parse(s)?;
        }
        match dual.get("gamma") {
            None => {}
            Some(Value::String(s)) if s == "inv_sqrt" => cfg.gamma = GammaRule::InvSqrt,
            Some(v) => match as_float(v) {
                Some(g) => cfg.gamma = GammaRule::Constant(g),
                None => return Err(dual.err("gamma", "\"inv_sqrt\" or a positive number", v)),
            },
        }
        cfg.u_bar = dual.float("u_bar")?;

        let ts = section("two_stage");
        if let Some(x) = ts.float("delta")? {
            cfg.two_stage.delta = x;
        }
        if let Some(x) = ts.float("lambda")? {
            cfg.two_stage.lambda = x;
        }
        if let Some(x) = ts.float("theta")? {
            cfg.two_stage.theta = x;
        }
        match ts.get("J") {
            None => {}
            Some(Value::String(s)) if s == "theory" => cfg.two_stage.j_rule = JRule::Theory,
            Some(Value::String(s)) if s == "capped" => cfg.two_stage.j_rule = JRule::Capped,
            Some(Value::Integer(j)) if *j >= 1 => cfg.two_stage.j_rule = JRule::Fixed(*j as usize),
            Some(v) => return Err(ts.err("J", "\"theory\", \"capped\" or a positive integer", v)),
        }

        if table.contains_key("sweep") {
            let sw = section("sweep");
            let axis = match sw.str("axis")? {
                None | Some("T") => SweepAxis::T,
                Some("m") | Some("M") => SweepAxis::M,
                Some(other) => return Err(Error::Config(format!("sweep.axis must be T or m, got '{other}'"))),
            };
            let values = match sw.get("values") {
                Some(Value::Array(items)) => {
                    if sw.get("from").is_some() || sw.get("to").is_some() || sw.get("points").is_some() {
                        return Err(Error::Config("sweep takes either values or from/to/points, not both".into()));
                    }
                    items
                        .iter()
                        .map(|v| match v {
                            Value::Integer(i) if *i >= 1 => Ok(*i as usize),
                            other => Err(sw.err("values", "a list of positive integers", other)),
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                Some(v) => return Err(sw.err("values", "a list of positive integers", v)),
                None => match (sw.uint("from")?, sw.uint("to")?) {
                    (Some(from), Some(to)) => {
                        log_spaced(from, to, sw.uint("points")?.unwrap_or(DEFAULT_SWEEP_POINTS))?
                    }
                    (None, None) => Vec::new(),
                    _ => return Err(Error::Config("sweep range needs both from and to".into())),
                },
            };
            cfg.sweep = Some(Sweep { axis, values });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algos.is_empty() {
            return Err(Error::Config("experiment.algo must name at least one algorithm".into()));
        }
        for (i, a) in self.algos.iter().enumerate() {
            if self.algos[..i].contains(a) {
                return Err(Error::Config(format!("algo '{}' listed twice", a.name())));
            }
        }
        if self.reps < 1 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        if self.horizon < 1 {
            return Err(Error::Config("T must be >= 1".into()));
        }
        if self.m < 1 || self.q < 1 {
            return Err(Error::Config(format!("m and q must be >= 1, got m = {}, q = {}", self.m, self.q)));
        }
        if let GammaRule::Constant(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("dual.gamma must be positive, got {g}")));
            }
        }
        if let Some(u) = self.u_bar {
            if !(u > 0.0 && u.is_finite()) {
                return Err(Error::Config(format!("dual.u_bar must be positive, got {u}")));
            }
        }
        self.two_stage.validate()?;
        self.basis_spec(self.m).validate()?;
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::Config("sweep has no values".into()));
            }
            if sw.values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("sweep values must be strictly increasing, got {:?}", sw.values)));
            }
            if sw.values[0] < 1 {
                return Err(Error::Config("sweep values must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn basis_spec(&self, m: usize) -> crate::basis::BasisSpec {
        crate::basis::BasisSpec {
            m,
            q: self.q,
            alpha: self.alpha,
            rho_coarse: self.rho_coarse,
            rho_fine: self.rho_fine,
        }
    }

    /// Replace the size defaults with the full experimental scale.
    pub fn apply_full_scale(&mut self) {
        self.horizon = FULL_T;
        self.m = FULL_M;
        self.reps = FULL_REPS;
    }

    /// `(T, m)` of every point, in order. Without a sweep there is one point.
    pub fn points(&self) -> Vec<(usize, usize)> {
        match &self.sweep {
            None => vec![(self.horizon, self.m)],
            Some(Sweep { axis: SweepAxis::T, values }) => values.iter().map(|t| (*t, self.m)).collect(),
            Some(Sweep { axis: SweepAxis::M, values }) => values.iter().map(|m| (self.horizon, *m)).collect(),
        }
    }

    /// Every setting written out explicitly; parses back to an equal config.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        let list = |v: Vec<String>| format!("[{}]", v.join(", "));
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "algo = {}", list(self.algos.iter().map(|a| format!("\"{}\"", a.name())).collect()));
        let _ = writeln!(s, "model = \"{}\"", self.model.name());
        let _ = writeln!(s, "dist = \"{}\"", self.dist.name());
        match self.support {
            SupportSize::Finite(k) => {
                let _ = writeln!(s, "support = {k}");
            }
            SupportSize::Continuous => {
                let _ = writeln!(s, "support = \"continuous\"");
            }
        }
        let _ = writeln!(s, "general_model = \"{}\"", self.general_model.name());
        let _ = writeln!(s, "reps = {}", self.reps);
        let _ = writeln!(s, "seed = {}", self.master_seed);
        let _ = writeln!(s, "\n[size]");
        let _ = writeln!(s, "T = {}", self.horizon);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "q = {}", self.q);
        let _ = writeln!(s, "alpha = {:?}", self.alpha);
        let _ = writeln!(s, "rho_coarse = {:?}", self.rho_coarse);
        let _ = writeln!(s, "rho_fine = {:?}", self.rho_fine);
        let _ = writeln!(s, "\n[dual]");
        let _ = writeln!(s, "potential = \"{}\"", self.potential.name());
        match self.gamma {
            GammaRule::InvSqrt => {
                let _ = writeln!(s, "gamma = \"inv_sqrt\"");
            }
            GammaRule::Constant(g) => {
                let _ = writeln!(s, "gamma = {g:?}");
            }
        }
        if let Some(u) = self.u_bar {
            let _ = writeln!(s, "u_bar = {u:?}");
        }
        let _ = writeln!(s, "\n[two_stage]");
        let _ = writeln!(s, "delta = {:?}", self.two_stage.delta);
        let _ = writeln!(s, "lambda = {:?}", self.two_stage.lambda);
        let _ = writeln!(s, "theta = {:?}", self.two_stage.theta);
        match self.two_stage.j_rule {
            JRule::Theory => {
                let _ = writeln!(s, "J = \"theory\"");
            }
            JRule::Capped => {
                let _ = writeln!(s, "J = \"capped\"");
            }
            JRule::Fixed(j) => {
                let _ = writeln!(s, "J = {j}");
            }
        }
        if let Some(sw) = &self.sweep {
            let _ = writeln!(s, "\n[sweep]");
            let _ = writeln!(s, "axis = \"{}\"", sw.axis.name());
            let _ = writeln!(s, "values = {}", list(sw.values.iter().map(|v| v.to_string()).collect()));
        }
        s
    }
}
