//! Two-state correct/wrong chain for the verifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TheoryError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    /// P(correct → wrong).
    pub a: f64,
    /// P(wrong → correct).
    pub b: f64,
}

impl MarkovChain {
    pub fn new(a: f64, b: f64) -> Result<Self, TheoryError> {
        if !((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b)) {
            return Err(TheoryError::Parameter(format!("transition probabilities must lie in [0, 1], got a={a}, b={b}")));
        }
        if a + b <= 0.0 {
            return Err(TheoryError::Degenerate("a + b = 0 leaves the chain frozen".into()));
        }
        if a + b >= 2.0 {
            return Err(TheoryError::Degenerate("a + b = 2 makes the chain periodic".into()));
        }
        Ok(Self { a, b })
    }

    fn rho(&self) -> f64 {
        1.0 - self.a - self.b
    }

    pub fn stationary_wrong(&self) -> Result<f64, TheoryError> {
        Self::new(self.a, self.b)?;
        Ok(self.a / (self.a + self.b))
    }

    /// `p_k = π_W + (p_0 - π_W)(1 - a - b)^k`.
    pub fn wrong_prob(&self, p0: f64, k: u64) -> Result<f64, TheoryError> {
        let pi = self.stationary_wrong()?;
        Ok(pi + (p0 - pi) * self.rho().powf(k as f64))
    }

    /// `p_{k+1} = a + (1 - a - b) p_k`, iterated.
    pub fn wrong_prob_recursion(&self, p0: f64, k: u64) -> Result<f64, TheoryError> {
        Self::new(self.a, self.b)?;
        let mut p = p0;
        for _ in 0..k {
            p = self.a + self.rho() * p;
        }
        Ok(p)
    }

    /// `(1/K) Σ_{k<K} p_k` in closed form.
    pub fn mean_wrong_prob(&self, p0: f64, k: u64) -> Result<f64, TheoryError> {
        if k == 0 {
            return Err(TheoryError::Parameter("K must be at least 1".into()));
        }
        let pi = self.stationary_wrong()?;
        let kf = k as f64;
        Ok(pi + (p0 - pi) * (1.0 - self.rho().powf(kf)) / (kf * (self.a + self.b)))
    }

    /// `(1/K) Σ_{k<K} p_k` by summing the recursion.
    pub fn mean_wrong_prob_direct(&self, p0: f64, k: u64) -> Result<f64, TheoryError> {
        if k == 0 {
            return Err(TheoryError::Parameter("K must be at least 1".into()));
        }
        Self::new(self.a, self.b)?;
        let mut p = p0;
        let mut sum = 0.0;
        for _ in 0..k {
            sum += p;
            p = self.a + self.rho() * p;
        }
        Ok(sum / k as f64)
    }

    /// One sample path `S_0 .. S_{len-1}`, `true` meaning wrong.
    pub fn sample_path<R: Rng>(&self, p0: f64, len: usize, rng: &mut R) -> Vec<bool> {
        let mut out = Vec::with_capacity(len);
        let mut wrong = rng.random::<f64>() < p0;
        for _ in 0..len {
            out.push(wrong);
            let u: f64 = rng.random();
            wrong = if wrong { u >= self.b } else { u < self.a };
        }
        out
    }

    /// Fraction of `chains` independent paths that are wrong at step `k`.
    pub fn monte_carlo_wrong(&self, p0: f64, k: usize, chains: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hits = (0..chains).filter(|_| self.sample_path(p0, k + 1, &mut rng)[k]).count();
        hits as f64 / chains as f64
    }
}
