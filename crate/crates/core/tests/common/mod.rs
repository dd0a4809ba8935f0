//! Shared test oracles.
#![allow(dead_code)]

use churnlab::data::rng::CounterRng;
use churnlab::losses::{
    ce_loss, codistill_independent, codistill_loss, combined_loss, distill_loss, entropy_regularized_loss,
    skl_regularized_loss, CodistillLoss, CodistillVariant, RegKind,
};
use churnlab::metrics::ProbMatrix;
use churnlab::tensor::{compute_gradients, Matrix, ModelParams, NodeId, Tape};

pub const FD_STEP: f64 = 1e-6;
/// Magnitude below which gradient coordinates are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub enum Objective {
    Ce,
    Entropy { alpha: f64, top_k: Option<usize> },
    Skl { alpha: f64, top_k: Option<usize> },
    CodistillL1 { beta: f64 },
    CodistillSkl { beta: f64 },
    /// Teachers are fixed matrices, as with stale snapshots.
    CeIndependent { beta: f64, teachers: (Matrix, Matrix) },
    Combined { alpha: f64, beta: f64, reg: RegKind },
    Distill { tau: f64, teacher: ProbMatrix },
}

impl Objective {
    pub fn two_models(&self) -> bool {
        matches!(
            self,
            Objective::CodistillL1 { .. }
                | Objective::CodistillSkl { .. }
                | Objective::CeIndependent { .. }
                | Objective::Combined { .. }
        )
    }
}

#[derive(Debug, Clone)]
pub struct GradCase {
    pub sizes: Vec<usize>,
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub objective: Objective,
    /// Flattened parameters of one or two models.
    pub params: Vec<f64>,
}

fn random_probs(rng: &mut CounterRng, n: usize, k: usize) -> ProbMatrix {
    let mut data = Vec::with_capacity(n * k);
    for _ in 0..n {
        let row: Vec<f64> = (0..k).map(|_| rng.uniform(0.05, 1.0)).collect();
        let s: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| v / s));
    }
    ProbMatrix::new(k, data).unwrap()
}

impl GradCase {
    /// Random small net, batch and parameters for `objective_index` (mod 10).
    pub fn random(seed: u64, objective_index: usize) -> Self {
        let mut rng = CounterRng::keyed(&[0x6772_6164, seed]);
        let d = 1 + rng.below(4) as usize;
        let k = 3 + rng.below(3) as usize;
        let n = 1 + rng.below(6) as usize;
        let mut sizes = vec![d];
        for _ in 0..1 + rng.below(2) {
            sizes.push(2 + rng.below(7) as usize);
        }
        sizes.push(k);
        let x = Matrix::new(n, d, (0..n * d).map(|_| rng.gaussian()).collect()).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k as u64) as usize).collect();
        let alpha = rng.uniform(0.05, 0.95);
        let beta = rng.uniform(0.01, 1.0);
        let top_k = Some(2 + rng.below(k as u64 - 2) as usize);
        let objective = match objective_index % 10 {
            0 => Objective::Entropy { alpha, top_k: None },
            1 => Objective::Entropy { alpha, top_k },
            2 => Objective::Skl { alpha, top_k: None },
            3 => Objective::Skl { alpha, top_k },
            4 => Objective::CodistillL1 { beta },
            5 => Objective::CodistillSkl { beta },
            6 => Objective::Combined { alpha, beta, reg: RegKind::Entropy },
            7 => Objective::Combined { alpha, beta, reg: RegKind::Skl },
            8 => Objective::Distill { tau: rng.uniform(0.5, 4.0), teacher: random_probs(&mut rng, n, k) },
            _ => {
                let t1 = random_probs(&mut rng, n, k);
                let t2 = random_probs(&mut rng, n, k);
                Objective::CeIndependent {
                    beta,
                    teachers: (
                        Matrix::new(n, k, t1.data().to_vec()).unwrap(),
                        Matrix::new(n, k, t2.data().to_vec()).unwrap(),
                    ),
                }
            }
        };
        let models = if objective.two_models() { 2 } else { 1 };
        let mut params = Vec::new();
        for m in 0..models {
            let p = ModelParams::init(&sizes, seed.wrapping_mul(31).wrapping_add(m)).unwrap();
            // Nonzero biases and a wider weight spread exercise every path.
            params.extend(p.values().iter().map(|w| 1.5 * w + 0.1 * rng.gaussian()));
        }
        Self { sizes, x, labels, objective, params }
    }

    fn split(&self, flat: &[f64]) -> Vec<ModelParams> {
        let shapes: Vec<(usize, usize)> = self.sizes.windows(2).map(|w| (w[0], w[1])).collect();
        let per: usize = shapes.iter().map(|&(i, o)| i * o + o).sum();
        flat.chunks(per).map(|c| ModelParams::new(shapes.clone(), c.to_vec()).unwrap()).collect()
    }

    /// Records the objective on a fresh tape; returns the loss node.
    pub fn build(&self, flat: &[f64]) -> (Tape, NodeId) {
        let models = self.split(flat);
        let mut t = Tape::new();
        let bound: Vec<_> = models.iter().map(|m| m.bind(&mut t)).collect();
        let x = t.constant(self.x.clone());
        let probs: Vec<NodeId> = bound.iter().map(|b| b.probs(&mut t, x).unwrap()).collect();
        let y = &self.labels;
        let loss = match &self.objective {
            Objective::Ce => ce_loss(&mut t, probs[0], y).unwrap(),
            Objective::Entropy { alpha, top_k } => entropy_regularized_loss(&mut t, probs[0], y, *alpha, *top_k).unwrap(),
            Objective::Skl { alpha, top_k } => skl_regularized_loss(&mut t, probs[0], y, *alpha, *top_k).unwrap(),
            Objective::CodistillL1 { beta } | Objective::CodistillSkl { beta } => {
                let v = if matches!(self.objective, Objective::CodistillL1 { .. }) {
                    CodistillVariant::L1
                } else {
                    CodistillVariant::Skl
                };
                match codistill_loss(&mut t, probs[0], probs[1], y, *beta, v).unwrap() {
                    CodistillLoss::Joint(l) => l,
                    CodistillLoss::Independent(..) => unreachable!(),
                }
            }
            Objective::CeIndependent { beta, teachers } => {
                let t1 = t.constant(teachers.0.clone());
                let t2 = t.constant(teachers.1.clone());
                let (l1, l2) = codistill_independent(&mut t, probs[0], probs[1], t1, t2, y, *beta).unwrap();
                t.add(l1, l2).unwrap()
            }
            Objective::Combined { alpha, beta, reg } => {
                combined_loss(&mut t, probs[0], probs[1], y, *alpha, *beta, *reg).unwrap()
            }
            Objective::Distill { tau, teacher } => distill_loss(&mut t, probs[0], teacher, *tau).unwrap(),
        };
        (t, loss)
    }

    pub fn loss_at(&self, flat: &[f64]) -> f64 {
        let (t, l) = self.build(flat);
        t.scalar(l)
    }

    pub fn analytic(&self) -> Vec<f64> {
        let (t, l) = self.build(&self.params);
        compute_gradients(&t, l).unwrap()
    }

    /// Central differences, one coordinate at a time.
    pub fn numeric(&self) -> Vec<f64> {
        let mut w = self.params.clone();
        (0..w.len())
            .map(|i| {
                let orig = w[i];
                w[i] = orig + FD_STEP;
                let up = self.loss_at(&w);
                w[i] = orig - FD_STEP;
                let down = self.loss_at(&w);
                w[i] = orig;
                (up - down) / (2.0 * FD_STEP)
            })
            .collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        rel_errors(&self.analytic(), &self.numeric()).into_iter().fold(0.0, f64::max)
    }
}

pub fn rel_errors(a: &[f64], n: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(n)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .collect()
}

/// Random row-stochastic matrix with rows drawn from a Dirichlet(1) (via
/// exponentials) and sharpened by `power`.
pub fn random_prob_matrix(rng: &mut CounterRng, n: usize, k: usize, power: f64) -> ProbMatrix {
    let mut data = Vec::with_capacity(n * k);
    for _ in 0..n {
        let row: Vec<f64> = (0..k).map(|_| (-(1.0 - rng.next_f64()).ln()).powf(power)).collect();
        let s: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| v / s));
    }
    ProbMatrix::new(k, data).unwrap()
}
