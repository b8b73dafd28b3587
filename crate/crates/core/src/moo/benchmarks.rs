//! Standard continuous test problems.

use rand::Rng;

use super::engine::Problem;
use super::operators::{polynomial_mutation, sbx};
use super::ObjectiveVector;

/// ZDT1: `n` variables in [0, 1]; Pareto front f2 = 1 - sqrt(f1).
#[derive(Debug, Clone)]
pub struct Zdt1 {
    pub n: usize,
    pub eta_c: f64,
    pub eta_m: f64,
}

impl Zdt1 {
    pub fn new(n: usize) -> Self {
        Zdt1 {
            n,
            eta_c: 15.0,
            eta_m: 20.0,
        }
    }

    pub fn objectives(x: &[f64]) -> [f64; 2] {
        let f1 = x[0];
        let g = 1.0 + 9.0 * x[1..].iter().sum::<f64>() / (x.len() - 1) as f64;
        [f1, g * (1.0 - (f1 / g).sqrt())]
    }

    /// `k` evenly spaced points on the analytic front.
    pub fn pareto_front(k: usize) -> Vec<Vec<f64>> {
        (0..k)
            .map(|i| {
                let f1 = i as f64 / (k - 1) as f64;
                vec![f1, 1.0 - f1.sqrt()]
            })
            .collect()
    }
}

impl Problem for Zdt1 {
    type Genome = Vec<f64>;

    fn num_objectives(&self) -> usize {
        2
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.n).map(|_| rng.gen::<f64>()).collect()
    }

    fn crossover<R: Rng + ?Sized>(
        &self,
        a: &Vec<f64>,
        b: &Vec<f64>,
        rng: &mut R,
    ) -> (Vec<f64>, Vec<f64>) {
        sbx(a, b, &vec![(0.0, 1.0); self.n], self.eta_c, rng)
    }

    fn mutate<R: Rng + ?Sized>(&self, x: &Vec<f64>, rate: f64, rng: &mut R) -> Vec<f64> {
        x.iter()
            .map(|&v| {
                if rng.gen_bool(rate) {
                    polynomial_mutation(v, 0.0, 1.0, self.eta_m, rng)
                } else {
                    v
                }
            })
            .collect()
    }

    fn evaluate(&self, x: &Vec<f64>, _seed: u64) -> Result<ObjectiveVector, String> {
        Ok(ObjectiveVector(Self::objectives(x).to_vec()))
    }
}
