//! Problem instances and arrival streams.
//!
//! Two input models are supported: i.i.d. draws (optionally from a finite
//! support sampled up front) and a uniformly random permutation of a fixed
//! multiset. Every generator is a pure function of its configuration and a
//! 64-bit seed; replication seeds are derived with [`derive_seed`].

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Normal};

use crate::basis::Basis;
use crate::csvfmt::fmt_f64;
use crate::error::{Error, Result};
use crate::linalg::norm_inf;

/// SplitMix64 finalizer applied to `parent + (index + 1) * golden_gamma`.
///
/// This is the seed-derivation contract: a child seed depends only on the
/// parent seed and the index, so replication `i` never observes the
/// randomness of replication `j`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut z = parent.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A scalar distribution family.
#[derive(Clone, Debug, PartialEq)]
pub enum Dist {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    Cauchy { loc: f64, scale: f64 },
    Categorical(Vec<f64>),
}

impl Dist {
    pub fn validate(&self) -> Result<()> {
        match self {
            Dist::Uniform { lo, hi } if !(lo < hi) => {
                Err(Error::Config(format!("uniform needs lo < hi, got [{lo}, {hi}]")))
            }
            Dist::Normal { sd, .. } if !(*sd > 0.0) => {
                Err(Error::Config(format!("normal needs sd > 0, got {sd}")))
            }
            Dist::Cauchy { scale, .. } if !(*scale > 0.0) => {
                Err(Error::Config(format!("cauchy needs scale > 0, got {scale}")))
            }
            Dist::Categorical(v) if v.is_empty() => {
                Err(Error::Config("categorical needs at least one value".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether every draw is almost surely bounded.
    pub fn is_bounded(&self) -> bool {
        !matches!(self, Dist::Cauchy { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Dist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Dist::Normal { mean, sd } => Normal::new(*mean, *sd).expect("validated").sample(rng),
            Dist::Cauchy { loc, scale } => Cauchy::new(*loc, *scale).expect("validated").sample(rng),
            Dist::Categorical(values) => values[rng.random_range(0..values.len())],
        }
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dist::Uniform { lo, hi } => write!(f, "U[{lo},{hi}]"),
            Dist::Normal { mean, sd } => write!(f, "N({mean},{sd})"),
            Dist::Cauchy { loc, scale } => write!(f, "Cauchy({loc},{scale})"),
            Dist::Categorical(v) => write!(f, "Cat{v:?}"),
        }
    }
}

/// How the `m` cost coefficients of an arrival are drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum CostDist {
    /// Every coefficient from the same family.
    Iid(Dist),
    /// Row `i` uses family `i mod len`.
    RoundRobin(Vec<Dist>),
}

impl CostDist {
    fn validate(&self) -> Result<()> {
        match self {
            CostDist::Iid(d) => d.validate(),
            CostDist::RoundRobin(ds) if ds.is_empty() => {
                Err(Error::Config("round-robin cost needs at least one family".into()))
            }
            CostDist::RoundRobin(ds) => ds.iter().try_for_each(Dist::validate),
        }
    }

    fn is_bounded(&self) -> bool {
        match self {
            CostDist::Iid(d) => d.is_bounded(),
            CostDist::RoundRobin(ds) => ds.iter().all(Dist::is_bounded),
        }
    }

    fn sample_vec<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<f64> {
        match self {
            CostDist::Iid(d) => (0..m).map(|_| d.sample(rng)).collect(),
            CostDist::RoundRobin(ds) => (0..m).map(|i| ds[i % ds.len()].sample(rng)).collect(),
        }
    }
}

/// Support size of the arrival distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupportSize {
    Finite(usize),
    Continuous,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistConfig {
    pub reward: Dist,
    pub cost: CostDist,
    pub support: SupportSize,
}

impl DistConfig {
    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        self.cost.validate()?;
        if self.support == SupportSize::Finite(0) {
            return Err(Error::Config("support size K must be >= 1".into()));
        }
        Ok(())
    }

    /// False for heavy-tailed families whose draws violate bounded data.
    pub fn is_bounded(&self) -> bool {
        self.reward.is_bounded() && self.cost.is_bounded()
    }

    fn draw<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Arrival {
        let r = self.reward.sample(rng);
        let a = self.cost.sample_vec(m, rng);
        Arrival::new(r, a)
    }
}

/// Named experiment presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Uniform,
    Normal,
    Cauchy,
    PermutationMix,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Preset::Uniform),
            "normal" => Ok(Preset::Normal),
            "cauchy" => Ok(Preset::Cauchy),
            "permutation-mix" => Ok(Preset::PermutationMix),
            other => Err(Error::Config(format!(
                "unknown dist preset '{other}' (expected uniform, normal, cauchy, permutation-mix)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Uniform => "uniform",
            Preset::Normal => "normal",
            Preset::Cauchy => "cauchy",
            Preset::PermutationMix => "permutation-mix",
        }
    }

    pub fn dist(&self, support: SupportSize) -> DistConfig {
        let (reward, cost) = match self {
            Preset::Uniform => (
                Dist::Uniform { lo: 0.0, hi: 1.0 },
                CostDist::Iid(Dist::Uniform { lo: 0.0, hi: 4.0 }),
            ),
            Preset::Normal => (
                Dist::Normal { mean: 1.0, sd: 1.0 },
                CostDist::Iid(Dist::Normal { mean: 4.0, sd: 1.0 }),
            ),
            Preset::Cauchy => (
                Dist::Cauchy { loc: 0.0, scale: 1.0 },
                CostDist::Iid(Dist::Cauchy { loc: 2.0, scale: 1.0 }),
            ),
            Preset::PermutationMix => (
                Dist::Uniform { lo: 0.0, hi: 1.0 },
                CostDist::RoundRobin(vec![
                    Dist::Uniform { lo: 0.0, hi: 3.0 },
                    Dist::Normal { mean: 2.0, sd: 1.0 },
                    Dist::Normal { mean: 1.0, sd: 1.0 },
                    Dist::Normal { mean: 0.0, sd: 1.0 },
                    Dist::Categorical(vec![-1.0, 0.0, 1.0]),
                ]),
            ),
        };
        DistConfig {
            reward,
            cost,
            support,
        }
    }

    /// Range of the per-period budget `d`.
    pub fn rhs_range(&self) -> (f64, f64) {
        match self {
            Preset::PermutationMix => (0.4, 0.8),
            _ => (2.0, 3.0),
        }
    }
}

/// One arrival `(r_t, a_t)`. The cost vector is reference counted so that
/// streams drawn from a finite support share the support's storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Arrival {
    pub r: f64,
    pub a: Arc<[f64]>,
}

impl Arrival {
    pub fn new(r: f64, a: Vec<f64>) -> Self {
        Self { r, a: a.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputModel {
    StochasticIid,
    RandomPermutation,
}

impl InputModel {
    pub fn name(&self) -> &'static str {
        match self {
            InputModel::StochasticIid => "stochastic",
            InputModel::RandomPermutation => "permutation",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArrivalStream {
    pub arrivals: Vec<Arrival>,
    pub model: InputModel,
    pub seed: u64,
}

impl ArrivalStream {
    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    pub fn m(&self) -> usize {
        self.arrivals.first().map_or(0, |a| a.a.len())
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.arrivals.iter().map(|a| a.r).collect()
    }
}

/// Horizon, per-period budget and (optionally) the support the stream was
/// drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub horizon: usize,
    pub d: Vec<f64>,
    pub b: Vec<f64>,
    pub support: Option<Vec<Arrival>>,
}

impl Instance {
    pub fn new(horizon: usize, d: Vec<f64>) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::Config("horizon T must be >= 1".into()));
        }
        if let Some(j) = d.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::Config(format!("budget d must be positive, d[{j}] = {}", d[j])));
        }
        let t = horizon as f64;
        let b = d.iter().map(|v| t * v).collect();
        Ok(Self {
            horizon,
            d,
            b,
            support: None,
        })
    }

    pub fn with_support(mut self, support: Vec<Arrival>) -> Self {
        self.support = Some(support);
        self
    }

    pub fn m(&self) -> usize {
        self.d.len()
    }
}

/// Sample a finite support of `k` arrivals.
pub fn gen_support(dist: &DistConfig, k: usize, m: usize, seed: u64) -> Result<Vec<Arrival>> {
    dist.validate()?;
    if k < 1 {
        return Err(Error::Config("support size K must be >= 1".into()));
    }
    let mut rng = rng_from(seed);
    Ok((0..k).map(|_| dist.draw(m, &mut rng)).collect())
}

/// Where i.i.d. arrivals come from.
#[derive(Clone, Debug)]
pub enum ArrivalSource<'a> {
    Support(&'a [Arrival]),
    Dist { dist: &'a DistConfig, m: usize },
}

/// `horizon` i.i.d. arrivals from `source`.
pub fn stream_stochastic(source: &ArrivalSource<'_>, horizon: usize, seed: u64) -> Result<ArrivalStream> {
    if horizon < 1 {
        return Err(Error::Config("horizon T must be >= 1".into()));
    }
    let mut rng = rng_from(seed);
    let arrivals = match source {
        ArrivalSource::Support(support) => {
            if support.is_empty() {
                return Err(Error::Config("empty support".into()));
            }
            (0..horizon)
                .map(|_| support[rng.random_range(0..support.len())].clone())
                .collect()
        }
        ArrivalSource::Dist { dist, m } => {
            dist.validate()?;
            (0..horizon).map(|_| dist.draw(*m, &mut rng)).collect()
        }
    };
    Ok(ArrivalStream {
        arrivals,
        model: InputModel::StochasticIid,
        seed,
    })
}

/// Uniformly random order of a fixed multiset (Fisher-Yates).
pub fn stream_permutation(multiset: Vec<Arrival>, seed: u64) -> Result<ArrivalStream> {
    if multiset.is_empty() {
        return Err(Error::Config("permutation model needs a non-empty multiset".into()));
    }
    let mut arrivals = multiset;
    arrivals.shuffle(&mut rng_from(seed));
    Ok(ArrivalStream {
        arrivals,
        model: InputModel::RandomPermutation,
        seed,
    })
}

/// `m` i.i.d. draws from `U[lo, hi]`.
pub fn sample_rhs(m: usize, lo: f64, hi: f64, seed: u64) -> Result<Vec<f64>> {
    if !(lo > 0.0) {
        return Err(Error::Config(format!("budget range must be positive, lo = {lo}")));
    }
    if !(lo < hi) {
        return Err(Error::Config(format!("budget range needs lo < hi, got [{lo}, {hi}]")));
    }
    let mut rng = rng_from(seed);
    Ok((0..m)
        .map(|_| (lo + (hi - lo) * rng.random::<f64>()).clamp(lo, hi))
        .collect())
}

/// Add independent `U[0, beta]` noise to every reward; costs are untouched.
pub fn perturb_rewards(stream: &ArrivalStream, beta: f64, seed: u64) -> Result<ArrivalStream> {
    if !(beta >= 0.0) {
        return Err(Error::Config(format!("perturbation beta must be >= 0, got {beta}")));
    }
    let mut out = stream.clone();
    if beta == 0.0 {
        return Ok(out);
    }
    let mut rng = rng_from(seed);
    for a in &mut out.arrivals {
        a.r += beta * rng.random::<f64>();
    }
    Ok(out)
}

/// Empirical data bounds of a realized stream against a basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataBounds {
    pub r_bar: f64,
    pub a_bar: f64,
    pub d_lo: f64,
    pub d_hi: f64,
    /// `max_t ‖a_tᵀΦ‖_∞`
    pub c_bar: f64,
    /// `min_j (dᵀΦ)_j`
    pub d_phi_lo: f64,
    /// `max_j (dᵀΦ)_j`
    pub d_phi_hi: f64,
}

impl DataBounds {
    pub fn is_finite(&self) -> bool {
        [
            self.r_bar,
            self.a_bar,
            self.d_lo,
            self.d_hi,
            self.c_bar,
            self.d_phi_lo,
            self.d_phi_hi,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

pub fn compute_bounds(stream: &ArrivalStream, instance: &Instance, basis: &Basis) -> Result<DataBounds> {
    Error::check_len(basis.m(), instance.m())?;
    let mut r_bar = f64::NEG_INFINITY;
    let mut a_bar = 0.0_f64;
    let mut c_bar = 0.0_f64;
    for arr in &stream.arrivals {
        Error::check_len(basis.m(), arr.a.len())?;
        r_bar = r_bar.max(arr.r);
        a_bar = a_bar.max(norm_inf(&arr.a));
        c_bar = c_bar.max(norm_inf(&basis.project_unchecked(&arr.a)));
    }
    let d_phi = basis.project_unchecked(&instance.d);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DataBounds {
        r_bar,
        a_bar,
        d_lo: min(&instance.d),
        d_hi: max(&instance.d),
        c_bar,
        d_phi_lo: min(&d_phi),
        d_phi_hi: max(&d_phi),
    })
}

/// Write a stream as `t,r,a_1,...,a_m`.
pub fn write_stream_csv<W: Write>(stream: &ArrivalStream, mut out: W) -> Result<()> {
    let m = stream.m();
    let mut header = String::from("t,r");
    for i in 1..=m {
        header.push_str(&format!(",a_{i}"));
    }
    writeln!(out, "{header}")?;
    for (t, arr) in stream.arrivals.iter().enumerate() {
        let mut line = format!("{},{}", t + 1, fmt_f64(arr.r));
        for v in arr.a.iter() {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Read a stream written by [`write_stream_csv`].
pub fn read_stream_csv<R: BufRead>(input: R, model: InputModel, seed: u64) -> Result<ArrivalStream> {
    let rows = crate::csvfmt::read_numeric_rows(input, |h| h.len() >= 2 && h[0] == "t" && h[1] == "r")?;
    let mut arrivals = Vec::with_capacity(rows.len());
    let mut m = None;
    for (line, row) in rows {
        let width = row.len() - 2;
        if *m.get_or_insert(width) != width {
            return Err(Error::Parse {
                line,
                message: "ragged row".into(),
            });
        }
        arrivals.push(Arrival::new(row[1], row[2..].to_vec()));
    }
    Ok(ArrivalStream {
        arrivals,
        model,
        seed,
    })
}

/// Write the budget vector as `j,d_j`.
pub fn write_rhs_csv<W: Write>(d: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "j,d_j")?;
    for (j, v) in d.iter().enumerate() {
        writeln!(out, "{},{}", j + 1, fmt_f64(*v))?;
    }
    Ok(())
}

pub fn read_rhs_csv<R: BufRead>(input: R) -> Result<Vec<f64>> {
    let rows = crate::csvfmt::read_numeric_rows(input, |h| h == ["j", "d_j"])?;
    rows.into_iter()
        .map(|(line, row)| {
            if row.len() != 2 {
                return Err(Error::Parse {
                    line,
                    message: "expected 2 fields".into(),
                });
            }
            Ok(row[1])
        })
        .collect()
}
