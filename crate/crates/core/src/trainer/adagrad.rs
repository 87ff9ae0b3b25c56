//! AdaGrad with per-coordinate accumulators.

/// Squared-gradient accumulator state plus learning rate. The accumulator is
/// nondecreasing per coordinate, so repeated updates shrink step sizes.
#[derive(Debug, Clone)]
pub struct AdaGrad {
    learning_rate: f64,
    epsilon: f64,
    accum: Vec<f64>,
}

impl AdaGrad {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        AdaGrad {
            learning_rate,
            epsilon: 1e-8,
            accum: vec![0.0; len],
        }
    }

    /// One update over the full parameter vector:
    /// `G += g²; θ -= lr·g/(√G + ε)`.
    ///
    /// Returns the flat index of the first non-finite gradient, if any, so
    /// the caller can abort naming the parameter.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), usize> {
        self.step_at(0, params, grads)
    }

    /// Update restricted to a contiguous slice starting at `offset` in the
    /// flat parameter space (used for sparse row updates during pretraining).
    pub fn step_at(&mut self, offset: usize, params: &mut [f64], grads: &[f64]) -> Result<(), usize> {
        debug_assert_eq!(params.len(), grads.len());
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            if !g.is_finite() {
                return Err(offset + i);
            }
            let acc = &mut self.accum[offset + i];
            *acc += g * g;
            *p -= self.learning_rate * g / (acc.sqrt() + self.epsilon);
        }
        Ok(())
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accum
    }
}
