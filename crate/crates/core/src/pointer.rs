use serde::{Deserialize, Serialize};

/// Unit-norm appearance embedding emitted by the predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectPointer(Vec<f64>);

impl ObjectPointer {
    /// Normalizes `v` to unit length. A zero vector stays zero.
    pub fn normalized(v: Vec<f64>) -> Self {
        let mut p = ObjectPointer(v);
        p.normalize();
        p
    }

    pub fn normalize(&mut self) {
        let norm = self.0.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            self.0.iter_mut().for_each(|x| *x /= norm);
        }
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Inner product; equals the cosine for normalized pointers.
    pub fn cosine(&self, other: &ObjectPointer) -> f64 {
        debug_assert_eq!(self.dim(), other.dim(), "pointer dimension mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_vector_stays_zero() {
        let p = ObjectPointer::normalized(vec![0.0; 4]);
        assert_eq!(p.norm(), 0.0);
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(v in proptest::collection::vec(-10.0f64..10.0, 1..64)) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let once = ObjectPointer::normalized(v);
            prop_assert!((once.norm() - 1.0).abs() < 1e-6);
            let twice = ObjectPointer::normalized(once.as_slice().to_vec());
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
