//! Ask/tell state of the modular CMA-ES.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sampling::{orthogonalize, BaseGenerator, SOBOL_MAX_DIM};
use crate::error::{contract, Result};
use crate::space::{BaseSampler, CandidatePair, RestartRegime};

/// Half-width of the initial sampling box `[-5, 5]^dim`.
pub const BOX_HALF_WIDTH: f64 = 5.0;
/// Initial step size: a fifth of the box width.
pub const INITIAL_SIGMA: f64 = 2.0;
/// Smallest eigenvalue the covariance matrix may have after repair.
pub const EIGEN_FLOOR: f64 = 1e-12;

const TPA_CUMULATION: f64 = 0.3;
const TPA_ALPHA: f64 = 0.5;
const THRESHOLD_INIT: f64 = 0.1;
const THRESHOLD_DIAMETER: f64 = 2.0 * BOX_HALF_WIDTH;
const THRESHOLD_DECAY: f64 = 1.17;

pub fn default_lambda(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

/// Recombination weights. Mode 1 is uniform `1/mu`; mode 0 uses
/// `log(mu + 1/2) - log(i)` normalised to sum to one.
pub fn compute_weights(mu: usize, equal: bool) -> Vec<f64> {
    assert!(mu >= 1, "mu must be positive");
    if equal {
        return vec![1.0 / mu as f64; mu];
    }
    let base = (mu as f64 + 0.5).ln();
    let raw: Vec<f64> = (1..=mu).map(|i| base - (i as f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

fn effective_mass(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Selection mass of the variant's initial population in dimension `dim`.
pub fn default_mu_eff(config: &crate::space::ModuleConfiguration, dim: usize) -> f64 {
    effective_mass(&compute_weights(default_lambda(dim) / 2, config.equal_weights()))
}

/// One generation of candidates. `z` are the base vectors, `y = B D z` and
/// `x = mean + sigma * y`.
#[derive(Clone, Debug)]
pub struct Population {
    pub z: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub x: Vec<DVector<f64>>,
    /// Whether the first two entries are the two-point test samples.
    pub tpa_pair: bool,
}

impl Population {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Clone, Debug)]
struct Parent {
    x: DVector<f64>,
    f: f64,
}

/// Restart bookkeeping for IPOP and BIPOP.
#[derive(Clone, Debug, Default)]
pub struct RestartLedger {
    pub restarts: u32,
    pub large_restarts: u32,
    pub budget_large: u64,
    pub budget_small: u64,
    pub current_large: bool,
    pub regime_start: u64,
    pub largest_lambda: usize,
}

#[derive(Clone, Debug)]
pub struct EsState {
    pub dim: usize,
    pub mean: DVector<f64>,
    pub step_size: f64,
    pub covariance: DMatrix<f64>,
    pub p_c: DVector<f64>,
    pub p_sigma: DVector<f64>,
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub evaluations_used: u64,
    pub budget: u64,
    pub restart: RestartLedger,
    pub generation: u64,
    pair: CandidatePair,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    c_sigma: f64,
    d_sigma: f64,
    chi_n: f64,
    sampler: BaseGenerator,
    rng: ChaCha8Rng,
    parents: Vec<Parent>,
    prev_shift: Option<DVector<f64>>,
    tpa_s: f64,
    lambda0: usize,
    pub(crate) local_best: f64,
    pub(crate) stale_generations: u32,
}

/// Fresh strategy state for `pair` in dimension `dim`.
pub fn init_es(pair: CandidatePair, dim: usize, seed: u64) -> EsState {
    assert!(dim >= 1, "dimension must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = random_mean(dim, &mut rng);
    let sampler = BaseGenerator::new(sampler_kind(pair.config.base_sampler(), dim), dim, &mut rng);
    let lambda = default_lambda(dim);
    let mut st = EsState {
        dim,
        mean,
        step_size: INITIAL_SIGMA,
        covariance: DMatrix::identity(dim, dim),
        p_c: DVector::zeros(dim),
        p_sigma: DVector::zeros(dim),
        lambda,
        mu: lambda / 2,
        weights: Vec::new(),
        mu_eff: 1.0,
        evaluations_used: 0,
        budget: u64::MAX,
        restart: RestartLedger { current_large: true, largest_lambda: lambda, ..Default::default() },
        generation: 0,
        pair,
        basis: DMatrix::identity(dim, dim),
        scales: DVector::from_element(dim, 1.0),
        c_sigma: 0.0,
        d_sigma: 1.0,
        chi_n: (dim as f64).sqrt()
            * (1.0 - 1.0 / (4.0 * dim as f64) + 1.0 / (21.0 * (dim * dim) as f64)),
        sampler,
        rng,
        parents: Vec::new(),
        prev_shift: None,
        tpa_s: 0.0,
        lambda0: lambda,
        local_best: f64::INFINITY,
        stale_generations: 0,
    };
    st.set_population_size(lambda);
    st
}

fn random_mean(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(
        dim,
        (0..dim).map(|_| rng.random_range(-BOX_HALF_WIDTH..BOX_HALF_WIDTH)),
    )
}

/// Sobol directions stop at 21 dimensions; higher dimensions fall back to Halton.
fn sampler_kind(kind: BaseSampler, dim: usize) -> BaseSampler {
    if kind == BaseSampler::Sobol && dim > SOBOL_MAX_DIM {
        BaseSampler::Halton
    } else {
        kind
    }
}

impl EsState {
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn pair(&self) -> &CandidatePair {
        &self.pair
    }

    fn set_population_size(&mut self, lambda: usize) {
        self.lambda = lambda.max(2);
        self.mu = (self.lambda / 2).max(1);
        self.weights = compute_weights(self.mu, self.pair.config.equal_weights());
        self.mu_eff = effective_mass(&self.weights);
        let n = self.dim as f64;
        self.c_sigma = (self.mu_eff + 2.0) / (n + self.mu_eff + 5.0);
        self.d_sigma =
            1.0 + 2.0 * (((self.mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + self.c_sigma;
    }

    /// Swap in another variant and learning rates while keeping the search
    /// distribution (mean, step size, covariance and paths).
    pub fn reconfigure(&mut self, pair: CandidatePair) {
        if pair == self.pair {
            return;
        }
        let old_kind = self.sampler.kind();
        self.pair = pair;
        let new_kind = sampler_kind(pair.config.base_sampler(), self.dim);
        if new_kind != old_kind {
            self.sampler = BaseGenerator::new(new_kind, self.dim, &mut self.rng);
        }
        if !pair.config.tpa() {
            self.tpa_s = 0.0;
        }
        self.set_population_size(self.lambda);
    }

    fn threshold_length(&self) -> f64 {
        if self.budget == u64::MAX || self.budget == 0 {
            return THRESHOLD_INIT * THRESHOLD_DIAMETER;
        }
        let remaining = self.budget.saturating_sub(self.evaluations_used) as f64 / self.budget as f64;
        THRESHOLD_INIT * THRESHOLD_DIAMETER * remaining.powf(THRESHOLD_DECAY)
    }

    /// Generate `lambda` candidates.
    pub fn ask(&mut self) -> Population {
        let cfg = self.pair.config;
        let dim = self.dim;
        let n_base = if cfg.mirrored() { self.lambda.div_ceil(2) } else { self.lambda };
        let mut base: Vec<Vec<f64>> = (0..n_base)
            .map(|_| self.sampler.next_vector(dim, &mut self.rng))
            .collect();
        if cfg.orthogonal() {
            orthogonalize(&mut base, dim);
        }
        let mut z: Vec<DVector<f64>> = Vec::with_capacity(self.lambda);
        for b in base {
            let v = DVector::from_vec(b);
            if cfg.mirrored() && z.len() + 1 < self.lambda {
                let neg = -&v;
                z.push(v);
                z.push(neg);
            } else {
                z.push(v);
            }
        }
        z.truncate(self.lambda);

        let bd = &self.basis * DMatrix::from_diagonal(&self.scales);
        let mut y: Vec<DVector<f64>> = z.iter().map(|zi| &bd * zi).collect();

        if cfg.threshold() {
            let t = self.threshold_length();
            for (zi, yi) in z.iter_mut().zip(y.iter_mut()) {
                let len = zi.norm();
                if len > 0.0 && len < t {
                    let s = t / len;
                    *zi *= s;
                    *yi *= s;
                }
            }
        }

        let mut tpa_pair = false;
        if cfg.tpa() && self.lambda >= 2 {
            if let Some(shift) = &self.prev_shift {
                // z = D^-1 B^T (shift / sigma), rescaled to the expected sample length
                let mut z_dir = self.basis.transpose() * (shift / self.step_size);
                for (zi, d) in z_dir.iter_mut().zip(self.scales.iter()) {
                    *zi /= d;
                }
                let norm = z_dir.norm();
                if norm > 0.0 && norm.is_finite() {
                    z_dir *= self.chi_n / norm;
                }
                let y_dir = &bd * &z_dir;
                z[0] = z_dir.clone();
                z[1] = -z_dir;
                y[0] = y_dir.clone();
                y[1] = -y_dir;
                tpa_pair = true;
            }
        }

        let x = y.iter().map(|yi| &self.mean + self.step_size * yi).collect();
        Population { z, y, x, tpa_pair }
    }

    /// Update the distribution from the (possibly truncated) fitness values
    /// of `pop`, given in the same order as `pop`.
    pub fn tell(&mut self, pop: &Population, fitness: &[f64]) -> Result<()> {
        let k = fitness.len();
        if k == 0 || k > pop.len() || pop.x.iter().any(|x| x.len() != self.dim) {
            return Err(contract(format!(
                "tell: {} fitness values for a population of {} in dimension {}",
                k,
                pop.len(),
                self.dim
            )));
        }
        let cfg = self.pair.config;
        let hyper = self.pair.hyper;
        let n = self.dim as f64;

        let mut pool: Vec<usize> = (0..k).collect();
        if cfg.pairwise() {
            pool = (0..k)
                .step_by(2)
                .map(|i| {
                    if i + 1 < k && fitness[i + 1] < fitness[i] {
                        i + 1
                    } else {
                        i
                    }
                })
                .collect();
        }
        let mut candidates: Vec<Parent> = pool
            .iter()
            .map(|&i| Parent { x: pop.x[i].clone(), f: fitness[i] })
            .collect();
        if cfg.elitist() {
            candidates.extend(self.parents.iter().cloned());
        }
        candidates.sort_by(|a, b| a.f.total_cmp(&b.f));

        let mu_sel = self.mu.min(candidates.len());
        let weights = if mu_sel == self.mu {
            self.weights.clone()
        } else {
            compute_weights(mu_sel, cfg.equal_weights())
        };
        let mu_eff = effective_mass(&weights);
        let sigma = self.step_size;
        let old_mean = self.mean.clone();

        let ys: Vec<DVector<f64>> = candidates[..mu_sel]
            .iter()
            .map(|p| (&p.x - &old_mean) / sigma)
            .collect();
        let mut y_w = DVector::zeros(self.dim);
        for (w, y) in weights.iter().zip(&ys) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean = &old_mean + sigma * &y_w;

        let inv_sqrt = self.inverse_sqrt_covariance();
        let cs = self.c_sigma;
        self.p_sigma = (1.0 - cs) * &self.p_sigma + (cs * (2.0 - cs) * mu_eff).sqrt() * (&inv_sqrt * &y_w);
        let gen = (self.generation + 1) as i32;
        let ps_norm = self.p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - cs).powi(2 * gen)).sqrt()
            < (1.4 + 2.0 / (n + 1.0)) * self.chi_n;
        let hs = if h_sigma { 1.0 } else { 0.0 };
        let cc = hyper.cc;
        self.p_c = (1.0 - cc) * &self.p_c + hs * (cc * (2.0 - cc) * mu_eff).sqrt() * &y_w;

        let (c1, c_mu) = (hyper.c1, hyper.c_mu);
        let mut rank_mu = DMatrix::zeros(self.dim, self.dim);
        for (w, y) in weights.iter().zip(&ys) {
            rank_mu.ger(*w, y, y, 1.0);
        }
        let mut active_rate = 0.0;
        let mut negative = DMatrix::zeros(self.dim, self.dim);
        if cfg.active_update() && c_mu > 0.0 {
            let mut offspring: Vec<usize> = (0..k).collect();
            offspring.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]));
            let worst = offspring.len().min(self.mu);
            if worst > 0 {
                let w_neg = compute_weights(worst, cfg.equal_weights());
                for (w, &i) in w_neg.iter().zip(&offspring[..worst]) {
                    let y = (&pop.x[i] - &old_mean) / sigma;
                    let maha = (&inv_sqrt * &y).norm();
                    if maha > 0.0 {
                        let y = y * (n.sqrt() / maha);
                        negative.ger(*w, &y, &y, 1.0);
                    }
                }
                active_rate = (c_mu + c1)
                    .min(c_mu * (1.0 + 2.0 * mu_eff / (mu_eff + 2.0)))
                    .min(((1.0 - c1 - c_mu) / n).max(0.0));
            }
        }
        let decay = 1.0 - c1 - c_mu + active_rate;
        let old_c = self.covariance.clone();
        self.covariance = decay * &old_c
            + c1 * (&self.p_c * self.p_c.transpose() + (1.0 - hs) * cc * (2.0 - cc) * &old_c)
            + c_mu * rank_mu
            - active_rate * negative;

        if pop.tpa_pair && cfg.tpa() && k >= 2 {
            // rank advantage of the forward test point, offset so that a tie shrinks sigma
            let rank_of = |i: usize| fitness[..k].iter().filter(|&&f| f < fitness[i]).count() as f64;
            let advantage = (rank_of(1) - rank_of(0)) / (k as f64 - 1.0);
            self.tpa_s += TPA_CUMULATION * (advantage - TPA_ALPHA - self.tpa_s);
            self.step_size *= self.tpa_s.exp();
        } else if !cfg.tpa() {
            self.step_size *= ((cs / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).min(1.0).exp();
        }

        self.parents = candidates.into_iter().take(mu_sel).collect();
        self.prev_shift = Some(&self.mean - &old_mean);
        self.generation += 1;
        self.refresh_eigensystem();
        Ok(())
    }

    /// Best fitness among the currently selected parents.
    pub fn best_parent_fitness(&self) -> Option<f64> {
        self.parents.first().map(|p| p.f)
    }

    fn inverse_sqrt_covariance(&self) -> DMatrix<f64> {
        let inv = self.scales.map(|d| 1.0 / d);
        &self.basis * DMatrix::from_diagonal(&inv) * self.basis.transpose()
    }

    /// Symmetrise, decompose and floor the spectrum of the covariance.
    fn refresh_eigensystem(&mut self) {
        let c = &self.covariance;
        let sym = (c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if !min.is_finite() || eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            self.covariance = DMatrix::identity(self.dim, self.dim);
            self.basis = DMatrix::identity(self.dim, self.dim);
            self.scales = DVector::from_element(self.dim, 1.0);
            return;
        }
        let values = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
        if min < EIGEN_FLOOR {
            self.covariance =
                &eig.eigenvectors * DMatrix::from_diagonal(&values) * eig.eigenvectors.transpose();
            self.covariance = (&self.covariance + self.covariance.transpose()) * 0.5;
        } else {
            self.covariance = sym;
        }
        self.basis = eig.eigenvectors;
        self.scales = values.map(f64::sqrt);
    }

    pub fn max_axis(&self) -> f64 {
        self.scales.iter().cloned().fold(0.0, f64::max)
    }

    /// The distribution has collapsed or diverged; further generations cannot
    /// make progress.
    pub fn degenerate(&self) -> bool {
        let max_diag = self.covariance.diagonal().iter().cloned().fold(0.0, f64::max);
        !self.step_size.is_finite()
            || self.step_size * max_diag < 1e-12
            || self.step_size * self.max_axis() > 1e8
    }

    /// No improvement of the best value since the last restart for
    /// `10 + ceil(30 dim / lambda)` generations.
    pub fn stale(&self) -> bool {
        let window = 10 + (30.0 * self.dim as f64 / self.lambda as f64).ceil() as u32;
        self.stale_generations > window
    }

    /// Whether the restart trigger fires.
    pub fn stagnated(&self) -> bool {
        self.degenerate() || self.stale()
    }

    /// Track improvement of the best fitness seen since the last restart.
    pub(crate) fn note_generation_best(&mut self, best: f64) {
        if best < self.local_best {
            self.local_best = best;
            self.stale_generations = 0;
        } else {
            self.stale_generations += 1;
        }
    }

    /// Restart according to module 11. Returns `false` when the variant does
    /// not restart.
    pub fn restart(&mut self) -> bool {
        let regime = self.pair.config.restarts();
        if regime == RestartRegime::None {
            return false;
        }
        let spent = self.evaluations_used - self.restart.regime_start;
        if self.restart.current_large {
            self.restart.budget_large += spent;
        } else {
            self.restart.budget_small += spent;
        }
        self.restart.restarts += 1;
        self.restart.regime_start = self.evaluations_used;

        let mut sigma = INITIAL_SIGMA;
        let lambda = match regime {
            RestartRegime::Ipop => self.lambda * 2,
            RestartRegime::Bipop => {
                let large = self.restart.restarts == 1
                    || self.restart.budget_small >= self.restart.budget_large;
                self.restart.current_large = large;
                if large {
                    self.restart.large_restarts += 1;
                    self.lambda0 << self.restart.large_restarts
                } else {
                    let u: f64 = self.rng.random();
                    let ratio = self.restart.largest_lambda as f64 / self.lambda0 as f64 / 2.0;
                    sigma = INITIAL_SIGMA * 10f64.powf(-2.0 * u);
                    ((self.lambda0 as f64) * ratio.max(1.0).powf(u * u)).floor() as usize
                }
            }
            RestartRegime::None => unreachable!(),
        };
        self.restart.largest_lambda = self.restart.largest_lambda.max(lambda);
        self.mean = random_mean(self.dim, &mut self.rng);
        self.step_size = sigma;
        self.covariance = DMatrix::identity(self.dim, self.dim);
        self.basis = DMatrix::identity(self.dim, self.dim);
        self.scales = DVector::from_element(self.dim, 1.0);
        self.p_c = DVector::zeros(self.dim);
        self.p_sigma = DVector::zeros(self.dim);
        self.parents.clear();
        self.prev_shift = None;
        self.tpa_s = 0.0;
        self.generation = 0;
        self.local_best = f64::INFINITY;
        self.stale_generations = 0;
        self.set_population_size(lambda);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Hyperparameters, ModuleConfiguration};

    fn pair_with(modules: [u8; 11]) -> CandidatePair {
        CandidatePair::with_defaults(ModuleConfiguration::new(modules).unwrap(), 5)
    }

    #[test]
    fn weights_examples() {
        assert_eq!(compute_weights(1, false), vec![1.0]);
        assert_eq!(compute_weights(1, true), vec![1.0]);
        assert_eq!(compute_weights(4, true), vec![0.25; 4]);
        let w = compute_weights(4, false);
        let raw: Vec<f64> = (1..=4).map(|i| 4.5f64.ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        for (a, r) in w.iter().zip(&raw) {
            assert!((a - r / total).abs() < 1e-12, "{w:?}");
        }
        // ratios between consecutive weights are fixed by the log formula
        assert!((w[0] / w[1] - 0.4478 / 0.2415).abs() < 1e-3);
        assert!((w[1] / w[2] - 0.2415 / 0.1207).abs() < 1e-2);
        assert!(w.windows(2).all(|p| p[0] >= p[1]));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn init_population_sizes() {
        let st = init_es(pair_with([0; 11]), 5, 1);
        assert_eq!((st.lambda, st.mu), (8, 4));
        let mut m = [0; 11];
        m[8] = 1;
        let st = init_es(pair_with(m), 5, 1);
        assert!(st.weights.iter().all(|&w| w == 0.25));
        let again = init_es(pair_with(m), 5, 1);
        assert_eq!(st.mean, again.mean);
        assert!(st.mean.iter().all(|v| (-5.0..5.0).contains(v)));
    }

    #[test]
    fn mirrored_samples_are_exact_negations() {
        let mut m = [0; 11];
        m[2] = 1;
        for sampler in 0..3 {
            m[9] = sampler;
            let mut st = init_es(pair_with(m), 5, 3);
            for _ in 0..5 {
                let pop = st.ask();
                for k in 0..pop.len() / 2 {
                    assert_eq!(pop.z[2 * k + 1], -&pop.z[2 * k]);
                }
                let fit: Vec<f64> = pop.x.iter().map(|x| x.norm_squared()).collect();
                st.tell(&pop, &fit).unwrap();
            }
        }
    }

    #[test]
    fn orthogonal_samples() {
        let mut m = [0; 11];
        m[3] = 1;
        let mut st = init_es(pair_with(m), 3, 11);
        let pop = st.ask();
        assert_eq!(pop.len(), 7);
        for block in pop.z.chunks(3) {
            for i in 0..block.len() {
                for j in 0..i {
                    assert!(block[i].dot(&block[j]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_learning_rates_keep_identity() {
        let cfg = ModuleConfiguration::from_id(0).unwrap();
        for active in [0u8, 1] {
            let mut m = cfg.activations();
            m[0] = active;
            let pair = CandidatePair::new(
                ModuleConfiguration::new(m).unwrap(),
                Hyperparameters::new(0.0, 0.5, 0.0).unwrap(),
            )
            .unwrap();
            let mut st = init_es(pair, 5, 2);
            for _ in 0..20 {
                let pop = st.ask();
                let fit: Vec<f64> = pop.x.iter().map(|x| x[0] * 3.0 + x[1].powi(2)).collect();
                st.tell(&pop, &fit).unwrap();
                assert_eq!(st.covariance, DMatrix::identity(5, 5));
            }
        }
    }

    #[test]
    fn tell_rejects_mismatch() {
        let mut st = init_es(pair_with([0; 11]), 5, 2);
        let pop = st.ask();
        assert!(st.tell(&pop, &[]).is_err());
        assert!(st.tell(&pop, &vec![0.0; 9]).is_err());
    }

    #[test]
    fn covariance_stays_positive_definite_across_modules() {
        for id in (0..4608).step_by(97) {
            let pair = CandidatePair::with_defaults(ModuleConfiguration::from_id(id).unwrap(), 5);
            let mut st = init_es(pair, 5, id as u64);
            for _ in 0..30 {
                let pop = st.ask();
                let fit: Vec<f64> = pop
                    .x
                    .iter()
                    .map(|x| x.iter().enumerate().map(|(i, v)| 10f64.powi(i as i32) * v * v).sum())
                    .collect();
                st.tell(&pop, &fit).unwrap();
                let c = &st.covariance;
                assert!((c - c.transpose()).amax() < 1e-12);
                let min = SymmetricEigen::new(c.clone())
                    .eigenvalues
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                assert!(min >= EIGEN_FLOOR * 0.5, "config {id}: min eigenvalue {min}");
            }
        }
    }

    #[test]
    fn constant_landscape_mean_shift_is_unbiased() {
        // sum of mean shifts along e_0 over many independent runs stays near 0
        let mut total = 0.0;
        let reps = 400;
        for seed in 0..reps {
            let mut st = init_es(pair_with([0; 11]), 5, seed);
            let start = st.mean[0];
            for _ in 0..3 {
                let pop = st.ask();
                st.tell(&pop, &vec![1.0; pop.len()]).unwrap();
            }
            total += st.mean[0] - start;
        }
        let avg = total / reps as f64;
        assert!(avg.abs() < 0.5, "average shift {avg}");
    }
}
