//! Vose's alias method: O(n) construction, O(1) draws.

use rand::Rng;

use crate::math::Distribution;

#[derive(Debug, Clone)]
pub struct Sampler {
    /// Probability of keeping column `i` rather than jumping to `alias[i]`.
    keep: Vec<f64>,
    alias: Vec<u32>,
}

impl Sampler {
    pub fn new(dist: &Distribution) -> Self {
        let n = dist.bin_count();
        let mut scaled: Vec<f64> = dist.weights().iter().map(|&w| w * n as f64).collect();
        let mut keep = vec![1.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let mut small = Vec::new();
        let mut large = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            keep[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding.
        for i in large.into_iter().chain(small) {
            keep[i] = 1.0;
        }
        Self { keep, alias }
    }

    pub fn bin_count(&self) -> usize {
        self.keep.len()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let column = rng.random_range(0..self.keep.len());
        let keep = self.keep[column];
        if keep >= 1.0 || rng.random::<f64>() < keep {
            column
        } else {
            self.alias[column] as usize
        }
    }
}

/// Builds the alias table for `dist`.
pub fn build_sampler(dist: &Distribution) -> Sampler {
    Sampler::new(dist)
}
