//! Concentration of sampled inner products.
//!
//! For bounded `f, g` and `n` uniform samples,
//! `|<P_n f, P_n g> - <f, g>| <= 6 sqrt(log n / n) |f|_4 |g|_4` with
//! overwhelming probability. The check counts how often the bound fails.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::sample_sphere;
use crate::rng::trial_seed;
use crate::sphere::Expansion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPair {
    pub f: Expansion,
    pub g: Expansion,
}

/// All unordered pairs (including `f = g`) of single harmonics of degree at
/// most 2.
pub fn degree_two_pairs() -> Vec<HarmonicPair> {
    let singles: Vec<Expansion> = (0..=2u32)
        .flat_map(|l| (-(l as i32)..=l as i32).map(move |m| Expansion::single(l, m).expect("valid index")))
        .collect();
    let mut pairs = Vec::new();
    for a in 0..singles.len() {
        for b in a..singles.len() {
            pairs.push(HarmonicPair {
                f: singles[a].clone(),
                g: singles[b].clone(),
            });
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinRow {
    pub n: usize,
    pub pair: usize,
    pub target: f64,
    pub bound: f64,
    pub trials: usize,
    pub violations: usize,
    pub frequency: f64,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinReport {
    pub pairs: Vec<HarmonicPair>,
    pub rows: Vec<BernsteinRow>,
}

impl BernsteinReport {
    pub fn worst_frequency(&self) -> f64 {
        self.rows.iter().map(|r| r.frequency).fold(0.0, f64::max)
    }
}

pub fn run_bernstein_check(n_grid: &[usize], pairs: &[HarmonicPair], trials: usize, base_seed: u64) -> Result<BernsteinReport> {
    if trials == 0 || pairs.is_empty() || n_grid.iter().any(|&n| n < 2) || n_grid.is_empty() {
        return Err(Error::Config("Bernstein check needs n >= 2, a pair and a trial".into()));
    }
    let norms: Vec<(f64, f64)> = pairs.iter().map(|p| (p.f.l4_norm(), p.g.l4_norm())).collect();
    let mut rows = Vec::new();
    for &n in n_grid {
        // deviations[trial][pair]
        let deviations: Vec<Vec<f64>> = (0..trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<f64>> {
                let cloud = sample_sphere(n, trial_seed(base_seed, n, t))?;
                pairs
                    .iter()
                    .map(|p| Ok(p.f.project(&cloud)?.dot(&p.g.project(&cloud)?) - p.f.inner(&p.g)))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let rate = 6.0 * ((n as f64).ln() / n as f64).sqrt();
        for (i, p) in pairs.iter().enumerate() {
            let bound = rate * norms[i].0 * norms[i].1;
            let devs: Vec<f64> = deviations.iter().map(|d| d[i].abs()).collect();
            let violations = devs.iter().filter(|&&d| d > bound).count();
            rows.push(BernsteinRow {
                n,
                pair: i,
                target: p.f.inner(&p.g),
                bound,
                trials,
                violations,
                frequency: violations as f64 / trials as f64,
                max_deviation: devs.iter().copied().fold(0.0, f64::max),
            });
        }
    }
    Ok(BernsteinReport {
        pairs: pairs.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_list() {
        let pairs = degree_two_pairs();
        assert_eq!(pairs.len(), 45);
        let orthogonal = pairs.iter().filter(|p| p.f != p.g).all(|p| p.f.inner(&p.g) == 0.0);
        assert!(orthogonal);
    }

    #[test]
    fn constant_function_is_exact() {
        let one = Expansion::single(0, 0).unwrap();
        let pairs = [HarmonicPair { f: one.clone(), g: one }];
        let r = run_bernstein_check(&[257], &pairs, 5, 3).unwrap();
        assert_eq!(r.rows[0].violations, 0);
        assert!(r.rows[0].max_deviation < 1e-12);
    }

    #[test]
    fn y10_small_run() {
        let y = Expansion::single(1, 0).unwrap();
        let pairs = [HarmonicPair { f: y.clone(), g: y }];
        let r = run_bernstein_check(&[1024], &pairs, 20, 1).unwrap();
        assert_eq!(r.rows[0].target, 1.0);
        assert!(r.rows[0].frequency <= 0.05);
    }
}
