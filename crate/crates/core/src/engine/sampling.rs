//! Base samplers for the mutation vectors: Gaussian, and Sobol or Halton
//! points pushed through the inverse normal CDF.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

use crate::space::BaseSampler;

/// Joe–Kuo direction numbers (new-joe-kuo-6.21201) for Sobol dimensions 2..=21:
/// `(s, a, m_1..m_s)`. Dimension 1 is the van der Corput sequence.
const SOBOL_DIRECTIONS: [(u32, u32, &[u32]); 20] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
];

pub const SOBOL_MAX_DIM: usize = SOBOL_DIRECTIONS.len() + 1;
const SOBOL_BITS: usize = 32;

/// Gray-code Sobol generator over `[0,1)^dim`.
#[derive(Clone, Debug)]
pub struct Sobol {
    directions: Vec<[u32; SOBOL_BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    /// Panics if `dim` exceeds [`SOBOL_MAX_DIM`].
    pub fn new(dim: usize) -> Self {
        assert!(
            (1..=SOBOL_MAX_DIM).contains(&dim),
            "Sobol directions available for 1..={SOBOL_MAX_DIM} dimensions"
        );
        let mut directions = Vec::with_capacity(dim);
        let mut first = [0u32; SOBOL_BITS];
        for (i, v) in first.iter_mut().enumerate() {
            *v = 1 << (31 - i);
        }
        directions.push(first);
        for &(s, a, m) in SOBOL_DIRECTIONS.iter().take(dim - 1) {
            let s = s as usize;
            let mut v = [0u32; SOBOL_BITS];
            for i in 0..s {
                v[i] = m[i] << (31 - i);
            }
            for i in s..SOBOL_BITS {
                v[i] = v[i - s] ^ (v[i - s] >> s);
                for k in 1..s {
                    if (a >> (s - 1 - k)) & 1 == 1 {
                        v[i] ^= v[i - k];
                    }
                }
            }
            directions.push(v);
        }
        Self { directions, state: vec![0; dim], index: 0 }
    }

    /// Next point. The all-zero point at index 0 is skipped.
    pub fn next_point(&mut self) -> Vec<f64> {
        let c = self.index.trailing_ones() as usize;
        self.index += 1;
        for (x, v) in self.state.iter_mut().zip(&self.directions) {
            *x ^= v[c.min(SOBOL_BITS - 1)];
        }
        self.state.iter().map(|&x| f64::from(x) / 4_294_967_296.0).collect()
    }

    pub fn skip(&mut self, n: u64) {
        for _ in 0..n {
            self.next_point();
        }
    }
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut k = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= k).all(|&p| k % p != 0) {
            primes.push(k);
        }
        k += 1;
    }
    primes
}

/// Halton sequence using the first `dim` primes as bases.
#[derive(Clone, Debug)]
pub struct Halton {
    bases: Vec<u64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize) -> Self {
        Self { bases: first_primes(dim), index: 0 }
    }

    /// Next point, starting from index 1 (so the first point is `(1/2, 1/3, ...)`).
    pub fn next_point(&mut self) -> Vec<f64> {
        self.index += 1;
        self.bases
            .iter()
            .map(|&b| radical_inverse(self.index, b))
            .collect()
    }

    pub fn skip(&mut self, n: u64) {
        self.index += n;
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Standard normal quantile: Acklam's rational approximation refined by one
/// Halley step against `erfc`.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = 0.5 * erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Source of standard-normal base vectors.
#[derive(Clone, Debug)]
pub enum BaseGenerator {
    Gaussian,
    Sobol(Sobol),
    Halton(Halton),
}

impl BaseGenerator {
    /// Quasi-random streams start at a seed-dependent offset so that runs
    /// with different seeds see different points.
    pub fn new(kind: BaseSampler, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        match kind {
            BaseSampler::Gaussian => BaseGenerator::Gaussian,
            BaseSampler::Sobol => {
                let mut s = Sobol::new(dim);
                s.skip(rng.random_range(0..1024));
                BaseGenerator::Sobol(s)
            }
            BaseSampler::Halton => {
                let mut h = Halton::new(dim);
                h.skip(rng.random_range(0..1024));
                BaseGenerator::Halton(h)
            }
        }
    }

    pub fn kind(&self) -> BaseSampler {
        match self {
            BaseGenerator::Gaussian => BaseSampler::Gaussian,
            BaseGenerator::Sobol(_) => BaseSampler::Sobol,
            BaseGenerator::Halton(_) => BaseSampler::Halton,
        }
    }

    pub fn next_vector(&mut self, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            BaseGenerator::Gaussian => (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
            BaseGenerator::Sobol(s) => s.next_point().into_iter().map(inverse_normal_cdf).collect(),
            BaseGenerator::Halton(h) => h.next_point().into_iter().map(inverse_normal_cdf).collect(),
        }
    }
}

/// Gram–Schmidt in blocks of `dim` vectors; each vector keeps its original length.
pub fn orthogonalize(vectors: &mut [Vec<f64>], dim: usize) {
    for block in vectors.chunks_mut(dim) {
        let norms: Vec<f64> = block.iter().map(|v| dot(v, v).sqrt()).collect();
        for i in 0..block.len() {
            let (done, rest) = block.split_at_mut(i);
            for prev in done.iter() {
                let proj = dot(&rest[0], prev);
                for (a, b) in rest[0].iter_mut().zip(prev) {
                    *a -= proj * b;
                }
            }
            let n = dot(&rest[0], &rest[0]).sqrt();
            if n > 0.0 {
                rest[0].iter_mut().for_each(|a| *a /= n);
            }
        }
        for (v, n) in block.iter_mut().zip(norms) {
            v.iter_mut().for_each(|a| *a *= n);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn halton_first_point() {
        let mut h = Halton::new(2);
        assert_eq!(h.next_point(), vec![0.5, 1.0 / 3.0]);
        assert_eq!(h.next_point(), vec![0.25, 2.0 / 3.0]);
    }

    #[test]
    fn sobol_first_points() {
        let mut s = Sobol::new(3);
        assert_eq!(s.next_point(), vec![0.5, 0.5, 0.5]);
        assert_eq!(s.next_point(), vec![0.75, 0.25, 0.25]);
        assert_eq!(s.next_point(), vec![0.25, 0.75, 0.75]);
    }

    #[test]
    fn sobol_is_stratified() {
        // the first 2^k points of every dimension hit each dyadic interval once
        let mut s = Sobol::new(SOBOL_MAX_DIM);
        let mut pts = vec![vec![0.0; SOBOL_MAX_DIM]];
        for _ in 1..256 {
            pts.push(s.next_point());
        }
        for d in 0..SOBOL_MAX_DIM {
            let mut seen = vec![false; 256];
            for p in &pts {
                let cell = (p[d] * 256.0) as usize;
                assert!(!seen[cell], "dim {d}");
                seen[cell] = true;
            }
        }
    }

    #[test]
    fn inverse_normal_matches_statrs() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let n = Normal::new(0.0, 1.0).unwrap();
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let x = inverse_normal_cdf(p);
            assert!((n.cdf(x) - p).abs() < 1e-12, "p={p}");
        }
        for p in [1e-12, 1e-8, 1e-4, 0.02, 0.98, 1.0 - 1e-8] {
            let x = inverse_normal_cdf(p);
            assert!((n.cdf(x) - p).abs() / p.min(1.0 - p) < 1e-9, "p={p}");
        }
        assert_eq!(inverse_normal_cdf(0.5), 0.0);
    }

    #[test]
    fn orthogonalize_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = BaseGenerator::Gaussian;
        let mut vs: Vec<Vec<f64>> = (0..7).map(|_| g.next_vector(3, &mut rng)).collect();
        let before = vs.clone();
        orthogonalize(&mut vs, 3);
        for (b, block) in vs.chunks(3).enumerate() {
            for i in 0..block.len() {
                let n = dot(&before[3 * b + i], &before[3 * b + i]);
                assert!((dot(&block[i], &block[i]) - n).abs() < 1e-12);
                for j in 0..i {
                    assert!(dot(&block[i], &block[j]).abs() < 1e-9);
                }
            }
        }
    }
}
