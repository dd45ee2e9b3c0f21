//! The joint search space of CMA-ES variants and covariance learning rates.
//!
//! A variant is an 11-entry module activation vector. Entries 1 to 9 are
//! binary switches, entries 10 and 11 are ternary. The integer ConfID is the
//! dot product of the vector with a mixed-radix weight vector, giving 4,608
//! distinct variants numbered `0..=4607`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

pub const MODULE_COUNT: usize = 11;
pub const CONFIG_COUNT: usize = 4608;
pub const CONFID_WEIGHTS: [u16; MODULE_COUNT] = [2304, 1152, 576, 288, 144, 72, 36, 18, 9, 3, 1];
pub const MODULE_CARDINALITY: [u8; MODULE_COUNT] = [2, 2, 2, 2, 2, 2, 2, 2, 2, 3, 3];
pub const MODULE_NAMES: [&str; MODULE_COUNT] = [
    "active_update",
    "elitism",
    "mirrored_sampling",
    "orthogonal_sampling",
    "sequential_selection",
    "threshold_convergence",
    "tpa",
    "pairwise_selection",
    "equal_weights",
    "base_sampler",
    "restarts",
];

/// Smallest admissible cumulation rate; `cc = 0` would freeze the path.
pub const CC_FLOOR: f64 = 1e-6;

/// Sampler behind module 10.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaseSampler {
    Gaussian,
    Sobol,
    Halton,
}

/// Restart strategy behind module 11.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestartRegime {
    None,
    Ipop,
    Bipop,
}

/// Integer configuration id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfId(u16);

impl ConfId {
    pub fn new(id: i64) -> Result<Self> {
        if (0..CONFIG_COUNT as i64).contains(&id) {
            Ok(ConfId(id as u16))
        } else {
            Err(Error::InvalidId(id))
        }
    }

    pub fn get(self) -> u16 {
        self.0
    }

    /// All 4,608 ids in ascending order.
    pub fn all() -> impl Iterator<Item = ConfId> {
        (0..CONFIG_COUNT as u16).map(ConfId)
    }
}

impl fmt::Display for ConfId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dot product of an activation vector with [`CONFID_WEIGHTS`].
pub fn encode_config(m: &[u8]) -> Result<ConfId> {
    validate_activations(m)?;
    let id = m
        .iter()
        .zip(CONFID_WEIGHTS)
        .map(|(&a, w)| u16::from(a) * w)
        .sum();
    Ok(ConfId(id))
}

/// Inverse of [`encode_config`]: greedy division by the descending weights.
pub fn decode_config(id: i64) -> Result<[u8; MODULE_COUNT]> {
    let mut rest = ConfId::new(id)?.0;
    let mut m = [0u8; MODULE_COUNT];
    for (slot, w) in m.iter_mut().zip(CONFID_WEIGHTS) {
        *slot = (rest / w) as u8;
        rest %= w;
    }
    Ok(m)
}

fn validate_activations(m: &[u8]) -> Result<()> {
    if m.len() != MODULE_COUNT {
        return Err(Error::InvalidLength { expected: MODULE_COUNT, got: m.len() });
    }
    for (i, (&a, card)) in m.iter().zip(MODULE_CARDINALITY).enumerate() {
        if a >= card {
            return Err(Error::InvalidConfiguration { module: i + 1, value: a, max: card - 1 });
        }
    }
    Ok(())
}

/// A validated module activation vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "ConfigRepr", into = "u16")]
pub struct ModuleConfiguration([u8; MODULE_COUNT]);

impl ModuleConfiguration {
    pub fn new(activations: [u8; MODULE_COUNT]) -> Result<Self> {
        validate_activations(&activations)?;
        Ok(Self(activations))
    }

    pub fn from_id(id: i64) -> Result<Self> {
        decode_config(id).map(Self)
    }

    /// The default CMA-ES: every module off.
    pub fn default_variant() -> Self {
        Self([0; MODULE_COUNT])
    }

    pub fn id(&self) -> ConfId {
        ConfId(self.0.iter().zip(CONFID_WEIGHTS).map(|(&a, w)| u16::from(a) * w).sum())
    }

    pub fn activations(&self) -> [u8; MODULE_COUNT] {
        self.0
    }

    /// Activation of module `k` (1-based, matching the module table).
    pub fn module(&self, k: usize) -> u8 {
        self.0[k - 1]
    }

    pub fn active_update(&self) -> bool {
        self.0[0] == 1
    }
    pub fn elitist(&self) -> bool {
        self.0[1] == 1
    }
    pub fn mirrored(&self) -> bool {
        self.0[2] == 1
    }
    pub fn orthogonal(&self) -> bool {
        self.0[3] == 1
    }
    pub fn sequential(&self) -> bool {
        self.0[4] == 1
    }
    pub fn threshold(&self) -> bool {
        self.0[5] == 1
    }
    pub fn tpa(&self) -> bool {
        self.0[6] == 1
    }
    pub fn pairwise(&self) -> bool {
        self.0[7] == 1
    }
    pub fn equal_weights(&self) -> bool {
        self.0[8] == 1
    }

    pub fn base_sampler(&self) -> BaseSampler {
        match self.0[9] {
            0 => BaseSampler::Gaussian,
            1 => BaseSampler::Sobol,
            _ => BaseSampler::Halton,
        }
    }

    pub fn restarts(&self) -> RestartRegime {
        match self.0[10] {
            0 => RestartRegime::None,
            1 => RestartRegime::Ipop,
            _ => RestartRegime::Bipop,
        }
    }
}

impl fmt::Display for ModuleConfiguration {
    /// 11-digit activation string, e.g. `00000000000`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.0 {
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl FromStr for ModuleConfiguration {
    type Err = Error;

    /// Accepts either an 11-digit activation string or a decimal ConfID.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() == MODULE_COUNT && s.bytes().all(|b| b.is_ascii_digit()) {
            let mut m = [0u8; MODULE_COUNT];
            for (slot, b) in m.iter_mut().zip(s.bytes()) {
                *slot = b - b'0';
            }
            return Self::new(m);
        }
        let id: i64 = s
            .parse()
            .map_err(|_| Error::Contract(format!("cannot parse configuration {s:?}")))?;
        Self::from_id(id)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigRepr {
    Id(i64),
    Digits(String),
}

impl TryFrom<ConfigRepr> for ModuleConfiguration {
    type Error = Error;

    fn try_from(r: ConfigRepr) -> Result<Self> {
        match r {
            ConfigRepr::Id(id) => Self::from_id(id),
            ConfigRepr::Digits(s) => s.parse(),
        }
    }
}

impl From<ModuleConfiguration> for u16 {
    fn from(m: ModuleConfiguration) -> u16 {
        m.id().0
    }
}

/// Covariance learning rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub c1: f64,
    pub cc: f64,
    #[serde(rename = "cmu")]
    pub c_mu: f64,
}

impl Hyperparameters {
    pub fn new(c1: f64, cc: f64, c_mu: f64) -> Result<Self> {
        let h = Self { c1, cc, c_mu };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { c1, cc, c_mu } = *self;
        let ok = (0.0..=1.0).contains(&c1)
            && (0.0..=1.0).contains(&c_mu)
            && cc > 0.0
            && cc <= 1.0
            && c1 + c_mu <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidHyperparameters(format!(
                "c1={c1}, cc={cc}, cmu={c_mu} violates 0<=c1,cmu<=1, 0<cc<=1, c1+cmu<=1"
            )))
        }
    }

    /// Clamps into the box and rescales `c_mu` down to `1 - c1` if needed.
    pub fn repaired(self) -> Self {
        let c1 = self.c1.clamp(0.0, 1.0);
        let cc = self.cc.clamp(CC_FLOOR, 1.0);
        let mut c_mu = self.c_mu.clamp(0.0, 1.0);
        if c1 + c_mu > 1.0 {
            c_mu = 1.0 - c1;
        }
        Self { c1, cc, c_mu }
    }
}

/// Standard CMA-ES learning rates for dimension `dim` and selection mass `mu_eff`.
pub fn default_hyperparameters(dim: usize, mu_eff: f64) -> Hyperparameters {
    let d = dim as f64;
    let cc = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d);
    let c1 = 2.0 / ((d + 1.3).powi(2) + mu_eff);
    let c_mu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((d + 2.0).powi(2) + mu_eff));
    Hyperparameters { c1, cc, c_mu: c_mu.max(0.0) }
}

/// A point of the joint (variant, hyperparameters) space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    #[serde(rename = "confid")]
    pub config: ModuleConfiguration,
    #[serde(flatten)]
    pub hyper: Hyperparameters,
}

impl CandidatePair {
    pub fn new(config: ModuleConfiguration, hyper: Hyperparameters) -> Result<Self> {
        hyper.validate()?;
        Ok(Self { config, hyper })
    }

    /// The variant with its standard learning rates for `dim`.
    pub fn with_defaults(config: ModuleConfiguration, dim: usize) -> Self {
        let mu_eff = crate::engine::default_mu_eff(&config, dim);
        Self { config, hyper: default_hyperparameters(dim, mu_eff) }
    }

    /// Bitwise identity key, used for duplicate detection.
    pub fn key(&self) -> (u16, u64, u64, u64) {
        (
            self.config.id().get(),
            self.hyper.c1.to_bits(),
            self.hyper.cc.to_bits(),
            self.hyper.c_mu.to_bits(),
        )
    }

    /// Numeric feature vector: 11 activations followed by c1, cc, cmu.
    pub fn features(&self) -> [f64; DIMENSIONS] {
        let mut f = [0.0; DIMENSIONS];
        for (slot, a) in f.iter_mut().zip(self.config.0) {
            *slot = f64::from(a);
        }
        f[11] = self.hyper.c1;
        f[12] = self.hyper.cc;
        f[13] = self.hyper.c_mu;
        f
    }
}

/// Number of dimensions of the joint space.
pub const DIMENSIONS: usize = MODULE_COUNT + 3;

/// One axis of a [`SearchSpace`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dimension {
    /// Integer dimension restricted to the listed categories.
    Categorical { name: String, values: Vec<u8> },
    /// Real interval `[lo, hi]`; `lo == hi` pins the value.
    Real { name: String, lo: f64, hi: f64 },
}

impl Dimension {
    pub fn is_categorical(&self) -> bool {
        matches!(self, Dimension::Categorical { .. })
    }
}

/// The joint space: 11 categorical module axes followed by the real axes
/// c1, cc and cmu. The joint constraint `c1 + cmu <= 1` is enforced by
/// [`Hyperparameters::repaired`] after every draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl SearchSpace {
    /// The full CASH space.
    pub fn full() -> Self {
        let mut dims: Vec<Dimension> = MODULE_NAMES
            .iter()
            .zip(MODULE_CARDINALITY)
            .map(|(name, card)| Dimension::Categorical {
                name: name.to_string(),
                values: (0..card).collect(),
            })
            .collect();
        dims.push(Dimension::Real { name: "c1".into(), lo: 0.0, hi: 1.0 });
        dims.push(Dimension::Real { name: "cc".into(), lo: 0.0, hi: 1.0 });
        dims.push(Dimension::Real { name: "cmu".into(), lo: 0.0, hi: 1.0 });
        Self { dims }
    }

    /// Build from explicit module category sets and real bounds.
    pub fn new(
        modules: [Vec<u8>; MODULE_COUNT],
        c1: (f64, f64),
        cc: (f64, f64),
        c_mu: (f64, f64),
    ) -> Result<Self> {
        let mut dims = Vec::with_capacity(DIMENSIONS);
        for (k, values) in modules.into_iter().enumerate() {
            if values.is_empty() {
                return Err(contract(format!("module {} has no allowed values", k + 1)));
            }
            for &v in &values {
                if v >= MODULE_CARDINALITY[k] {
                    return Err(Error::InvalidConfiguration {
                        module: k + 1,
                        value: v,
                        max: MODULE_CARDINALITY[k] - 1,
                    });
                }
            }
            let mut values = values;
            values.sort_unstable();
            values.dedup();
            dims.push(Dimension::Categorical { name: MODULE_NAMES[k].into(), values });
        }
        for (name, (lo, hi)) in [("c1", c1), ("cc", cc), ("cmu", c_mu)] {
            if !(lo <= hi && lo >= 0.0 && hi <= 1.0) {
                return Err(contract(format!("bounds for {name} must satisfy 0 <= lo <= hi <= 1")));
            }
            dims.push(Dimension::Real { name: name.into(), lo, hi });
        }
        let space = Self { dims };
        if space.real_bounds(0).0 + space.real_bounds(2).0 > 1.0 {
            return Err(contract("lower bounds of c1 and cmu sum above 1"));
        }
        Ok(space)
    }

    /// Modules pinned to `config`; learning rates free.
    pub fn frozen_modules(config: ModuleConfiguration) -> Self {
        let mut space = Self::full();
        for (k, a) in config.0.into_iter().enumerate() {
            space.dims[k] = Dimension::Categorical { name: MODULE_NAMES[k].into(), values: vec![a] };
        }
        space
    }

    /// A space containing only `pair`.
    pub fn single_point(pair: CandidatePair) -> Self {
        let mut space = Self::frozen_modules(pair.config);
        let h = pair.hyper;
        for (i, v) in [h.c1, h.cc, h.c_mu].into_iter().enumerate() {
            if let Dimension::Real { lo, hi, .. } = &mut space.dims[MODULE_COUNT + i] {
                *lo = v;
                *hi = v;
            }
        }
        space
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn categorical_mask(&self) -> [bool; DIMENSIONS] {
        let mut mask = [false; DIMENSIONS];
        for (m, d) in mask.iter_mut().zip(&self.dims) {
            *m = d.is_categorical();
        }
        mask
    }

    /// Allowed categories of module `k` (0-based).
    pub fn module_values(&self, k: usize) -> &[u8] {
        match &self.dims[k] {
            Dimension::Categorical { values, .. } => values,
            Dimension::Real { .. } => unreachable!("module axes are categorical"),
        }
    }

    /// Bounds of real axis `i` (0 = c1, 1 = cc, 2 = cmu).
    pub fn real_bounds(&self, i: usize) -> (f64, f64) {
        match &self.dims[MODULE_COUNT + i] {
            Dimension::Real { lo, hi, .. } => (*lo, *hi),
            Dimension::Categorical { .. } => unreachable!("learning-rate axes are real"),
        }
    }

    /// Number of distinct variants in the space.
    pub fn variant_count(&self) -> usize {
        (0..MODULE_COUNT).map(|k| self.module_values(k).len()).product()
    }

    pub fn contains(&self, pair: &CandidatePair) -> bool {
        let a = pair.config.0;
        let modules_ok = (0..MODULE_COUNT).all(|k| self.module_values(k).contains(&a[k]));
        let h = pair.hyper;
        let reals_ok = [h.c1, h.cc, h.c_mu].iter().enumerate().all(|(i, &v)| {
            let (lo, hi) = self.real_bounds(i);
            // the cc floor may lift a zero lower bound
            (lo..=hi).contains(&v) || (i == 1 && lo < CC_FLOOR && v == CC_FLOOR)
                // cmu may sit below its lower bound after repair
                || (i == 2 && v < lo && (h.c1 + v - 1.0).abs() < 1e-12)
        });
        modules_ok && reals_ok && h.validate().is_ok()
    }

    /// Assemble a pair from module values and raw reals, repairing the reals.
    pub fn make_pair(&self, modules: [u8; MODULE_COUNT], reals: [f64; 3]) -> CandidatePair {
        let mut r = reals;
        for (i, v) in r.iter_mut().enumerate() {
            let (lo, hi) = self.real_bounds(i);
            *v = v.clamp(lo, hi);
        }
        CandidatePair {
            config: ModuleConfiguration(modules),
            hyper: Hyperparameters { c1: r[0], cc: r[1], c_mu: r[2] }.repaired(),
        }
    }

    /// One uniform draw.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> CandidatePair {
        let mut modules = [0u8; MODULE_COUNT];
        for (k, slot) in modules.iter_mut().enumerate() {
            let values = self.module_values(k);
            *slot = values[rng.random_range(0..values.len())];
        }
        let mut reals = [0.0; 3];
        for (i, v) in reals.iter_mut().enumerate() {
            let (lo, hi) = self.real_bounds(i);
            *v = lo + (hi - lo) * rng.random::<f64>();
        }
        self.make_pair(modules, reals)
    }

    /// `n` independent uniform draws.
    pub fn sample_uniform_n(&self, n: usize, seed: u64) -> Vec<CandidatePair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_uniform(&mut rng)).collect()
    }
}

/// Latin hypercube design: each real axis is cut into `n` equal strata and
/// every stratum receives exactly one draw; module axes are uniform.
/// Draws violating `c1 + cmu <= 1` are repaired by lowering cmu.
pub fn sample_lhs(space: &SearchSpace, n: usize, seed: u64) -> Result<Vec<CandidatePair>> {
    if n == 0 {
        return Err(contract("latin hypercube needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strata: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            let (lo, hi) = space.real_bounds(i);
            let width = (hi - lo) / n as f64;
            let mut cells: Vec<usize> = (0..n).collect();
            cells.shuffle(&mut rng);
            cells
                .into_iter()
                .map(|c| {
                    let u: f64 = rng.random();
                    (lo + width * (c as f64 + u)).min(hi)
                })
                .collect()
        })
        .collect();
    Ok((0..n)
        .map(|j| {
            let mut modules = [0u8; MODULE_COUNT];
            for (k, slot) in modules.iter_mut().enumerate() {
                let values = space.module_values(k);
                *slot = values[rng.random_range(0..values.len())];
            }
            space.make_pair(modules, [strata[0][j], strata[1][j], strata[2][j]])
        })
        .collect())
}
