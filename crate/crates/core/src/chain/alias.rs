//! Walker/Vose alias tables: O(n) construction, O(1) exact sampling.

use rand::Rng;

use super::ChainError;

#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    threshold: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Builds the table for weights `p` (renormalized internally).
    pub fn new(p: &[f64]) -> Result<Self, ChainError> {
        let n = p.len();
        if n == 0 {
            return Err(ChainError::EmptyDistribution);
        }
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(ChainError::InvalidDistribution(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = p.iter().sum();
        if !(total > 0.0) {
            return Err(ChainError::EmptyDistribution);
        }
        let scale = n as f64 / total;
        let mut scaled: Vec<f64> = p.iter().map(|x| x * scale).collect();
        let mut threshold = vec![1.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let mut small = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            threshold[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers on either list carry mass 1 up to roundoff.
        for i in small.into_iter().chain(large) {
            threshold[i] = 1.0;
            alias[i] = i as u32;
        }
        Ok(Self { threshold, alias })
    }

    pub fn len(&self) -> usize {
        self.threshold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.threshold.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let n = self.threshold.len();
        let u: f64 = rng.random::<f64>() * n as f64;
        let i = (u as usize).min(n - 1);
        if u - (i as f64) < self.threshold[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }

    /// Probability of each outcome implied by the table.
    pub fn implied_probabilities(&self) -> Vec<f64> {
        let n = self.threshold.len() as f64;
        let mut p = vec![0.0; self.threshold.len()];
        for (i, (&t, &a)) in self.threshold.iter().zip(&self.alias).enumerate() {
            p[i] += t / n;
            p[a as usize] += (1.0 - t) / n;
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_table_never_aliases() {
        let t = AliasTable::new(&[0.25; 4]).unwrap();
        assert!(t.threshold.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn rejects_degenerate_input() {
        assert_eq!(AliasTable::new(&[]), Err(ChainError::EmptyDistribution));
        assert_eq!(AliasTable::new(&[0.0, 0.0]), Err(ChainError::EmptyDistribution));
        assert!(AliasTable::new(&[0.5, -0.1]).is_err());
    }

    #[test]
    fn zero_weight_outcome_is_never_drawn() {
        let t = AliasTable::new(&[0.0, 1.0, 0.0]).unwrap();
        let mut rng = crate::rng::stream(3, 0);
        assert!((0..10_000).all(|_| t.sample(&mut rng) == 1));
    }

    proptest! {
        #[test]
        fn table_encodes_input_distribution(w in prop::collection::vec(0.0f64..1.0, 1..40)) {
            prop_assume!(w.iter().sum::<f64>() > 1e-6);
            let total: f64 = w.iter().sum();
            let t = AliasTable::new(&w).unwrap();
            for (a, b) in t.implied_probabilities().iter().zip(&w) {
                prop_assert!((a - b / total).abs() < 1e-12);
            }
        }
    }
}
