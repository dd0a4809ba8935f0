use std::collections::VecDeque;
use std::time::Instant;

use super::artifact::{failed_file_name, write_json_atomic, EnsembleInfo, FailedRun, RunArtifact};
use super::config::ExperimentConfig;
use crate::data::rng::{channel, mix_key};
use crate::data::{augment, epoch_order, Dataset, SeedBundle};
use crate::digest::{digest_f64s, fnv1a, hex};
use crate::error::{Error, Result};
use crate::losses::{
    ce_loss, codistill_independent, codistill_loss, coefficient_at, combined_loss, distill_loss,
    entropy_regularized_loss, skl_regularized_loss, CodistillLoss, CodistillVariant, MethodKind,
    RampSchedule, RampStyleSpec,
};
use crate::metrics::{accuracy, mean_confidence, mean_entropy, ProbMatrix};
use crate::tensor::{forward_probs, lr_at, step_model, Matrix, ModelParams, NodeId, OptState, Tape};

const PEER_PURPOSE: u64 = 1;
const TEACHER_PURPOSE: u64 = 2;

/// Seed for a derived stream (second model, teachers), distinct from every
/// base seed used for run bundles.
pub fn derive_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    mix_key(&[channel::DERIVE, purpose, seed, index])
}

/// Seed bundle for teacher `j` of an ensemble trained alongside `bundle`.
pub fn teacher_bundle(bundle: SeedBundle, j: usize) -> SeedBundle {
    let d = |s| derive_seed(s, TEACHER_PURPOSE, j as u64);
    SeedBundle::new(d(bundle.init_seed), d(bundle.order_seed), d(bundle.augment_seed))
}

/// Train and eval splits plus what identifies them.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train_x: Matrix,
    pub train_y: Vec<usize>,
    pub eval_x: Matrix,
    pub eval_y: Vec<usize>,
    pub sizes: Vec<usize>,
    pub eval_digest: String,
}

pub fn split_digest(x: &Matrix, y: &[usize]) -> String {
    let mut bytes = Vec::with_capacity(16 + 8 * (x.data().len() + y.len()));
    bytes.extend_from_slice(&(x.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(x.cols() as u64).to_le_bytes());
    for v in x.data() {
        bytes.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    for &l in y {
        bytes.extend_from_slice(&(l as u64).to_le_bytes());
    }
    hex(fnv1a(&bytes))
}

impl Prepared {
    pub fn new(config: &ExperimentConfig, data: &Dataset) -> Result<Self> {
        config.method.validate(data.k())?;
        let (train_x, train_y) = data.train();
        let (eval_x, eval_y) = data.eval();
        if train_y.is_empty() || eval_y.is_empty() {
            return Err(Error::Config(format!(
                "dataset of {} rows leaves an empty train or eval split",
                data.len()
            )));
        }
        let eval_digest = split_digest(&eval_x, &eval_y);
        Ok(Self { train_x, train_y, eval_x, eval_y, sizes: config.layer_sizes(data), eval_digest })
    }

    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Self::new(config, &config.dataset.load()?)
    }
}

/// Minibatch stream of one run: per-epoch permutation plus augmentation.
struct Batches<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    batch_size: usize,
    per_epoch: usize,
    sigma: f64,
    bundle: SeedBundle,
    perm: Option<(u64, Vec<usize>)>,
}

impl<'a> Batches<'a> {
    fn new(x: &'a Matrix, y: &'a [usize], batch_size: usize, sigma: f64, bundle: SeedBundle) -> Self {
        let batch_size = batch_size.min(y.len());
        // The last partial batch of an epoch is dropped.
        let per_epoch = y.len() / batch_size;
        Self { x, y, batch_size, per_epoch, sigma, bundle, perm: None }
    }

    /// Row indices and augmented features for `step`.
    fn at(&mut self, step: usize) -> (Vec<usize>, Matrix, Vec<usize>) {
        let epoch = (step / self.per_epoch) as u64;
        let b = step % self.per_epoch;
        if self.perm.as_ref().map(|(e, _)| *e) != Some(epoch) {
            self.perm = Some((epoch, epoch_order(self.bundle.order_seed, epoch, self.y.len())));
        }
        let perm = &self.perm.as_ref().expect("set above").1;
        let idx = perm[b * self.batch_size..(b + 1) * self.batch_size].to_vec();
        let x = augment(&self.x.select_rows(&idx), self.bundle.augment_seed, epoch, b as u64, self.sigma);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        (idx, x, y)
    }
}

fn beta_ramp(config: &ExperimentConfig) -> RampSchedule {
    let m = &config.method;
    match m.ramp {
        RampStyleSpec::Linear => match m.ramp_c {
            Some(c) => RampSchedule::linear(m.beta, c),
            None => RampSchedule::saturating_at_tenth(m.beta, config.total_steps),
        },
        RampStyleSpec::Step => RampSchedule::step(m.beta, m.ramp_start),
    }
}

fn alpha_ramp(config: &ExperimentConfig) -> RampSchedule {
    let m = &config.method;
    match m.ramp {
        RampStyleSpec::Linear => RampSchedule::saturating_at_tenth(m.alpha, config.total_steps),
        RampStyleSpec::Step => RampSchedule::step(m.alpha, m.ramp_start),
    }
}

fn finite_loss(tape: &Tape, loss: NodeId) -> Result<()> {
    let v = tape.scalar(loss);
    if !v.is_finite() {
        return Err(Error::numeric(format!("loss is {v}")));
    }
    Ok(())
}

/// Row subset of a probability matrix.
fn select_probs(p: &ProbMatrix, idx: &[usize]) -> Result<ProbMatrix> {
    let mut data = Vec::with_capacity(idx.len() * p.k());
    for &i in idx {
        data.extend_from_slice(p.row(i));
    }
    ProbMatrix::new(p.k(), data)
}

/// Trains a single model with a one-model objective. `teacher` supplies
/// distillation targets indexed by training row.
fn train_single(
    config: &ExperimentConfig,
    prep: &Prepared,
    bundle: SeedBundle,
    kind: MethodKind,
    teacher: Option<&ProbMatrix>,
) -> Result<(ModelParams, ModelParams)> {
    let m = &config.method;
    let init = ModelParams::init(&prep.sizes, bundle.init_seed)?;
    let mut params = init.clone();
    let mut opt = OptState::for_params(&params, config.momentum);
    let mut batches = Batches::new(&prep.train_x, &prep.train_y, config.batch_size, config.augment_sigma, bundle);
    for step in 0..config.total_steps {
        let (idx, xb, yb) = batches.at(step);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let x = tape.constant(xb);
        let p = bound.probs(&mut tape, x).map_err(|e| e.at_step(step))?;
        let loss = match kind {
            MethodKind::Baseline => ce_loss(&mut tape, p, &yb)?,
            MethodKind::Entropy => entropy_regularized_loss(&mut tape, p, &yb, m.alpha, m.top_k)?,
            MethodKind::Skl => skl_regularized_loss(&mut tape, p, &yb, m.alpha, m.top_k)?,
            MethodKind::EnsembleDistill => {
                let t = teacher.ok_or_else(|| Error::Usage("distillation needs teacher probabilities".into()))?;
                distill_loss(&mut tape, p, &select_probs(t, &idx)?, m.temperature)?
            }
            other => return Err(Error::Usage(format!("{other} trains two models"))),
        };
        finite_loss(&tape, loss).map_err(|e| e.at_step(step))?;
        let grads = tape.backward(loss)?;
        let g = bound.flat_grad(&tape, &grads);
        step_model(&mut params, &g, &mut opt, lr_at(&config.schedule, step), step)?;
    }
    Ok((init, params))
}

/// Trains two models jointly; model 1 uses the bundle's init seed and
/// model 2 a seed derived from it. Both see the same batches.
fn train_pair(config: &ExperimentConfig, prep: &Prepared, bundle: SeedBundle) -> Result<(ModelParams, ModelParams)> {
    let m = &config.method;
    let init = ModelParams::init(&prep.sizes, bundle.init_seed)?;
    let mut w1 = init.clone();
    let mut w2 = ModelParams::init(&prep.sizes, derive_seed(bundle.init_seed, PEER_PURPOSE, 0))?;
    let mut o1 = OptState::for_params(&w1, config.momentum);
    let mut o2 = OptState::for_params(&w2, config.momentum);
    let beta = beta_ramp(config);
    let alpha = alpha_ramp(config);
    // Snapshots s_{t-T} ..= s_t for stale teachers.
    let mut history: VecDeque<(ModelParams, ModelParams)> = VecDeque::new();
    let mut batches = Batches::new(&prep.train_x, &prep.train_y, config.batch_size, config.augment_sigma, bundle);
    for step in 0..config.total_steps {
        let (_, xb, yb) = batches.at(step);
        let beta_t = coefficient_at(&beta, step);
        let mut tape = Tape::new();
        let b1 = w1.bind(&mut tape);
        let b2 = w2.bind(&mut tape);
        let x = tape.constant(xb.clone());
        let p1 = b1.probs(&mut tape, x).map_err(|e| e.at_step(step))?;
        let p2 = b2.probs(&mut tape, x).map_err(|e| e.at_step(step))?;
        let loss = match m.kind {
            MethodKind::CodistillL1 | MethodKind::CodistillSkl => {
                let variant =
                    if m.kind == MethodKind::CodistillL1 { CodistillVariant::L1 } else { CodistillVariant::Skl };
                match codistill_loss(&mut tape, p1, p2, &yb, beta_t, variant)? {
                    CodistillLoss::Joint(l) => l,
                    CodistillLoss::Independent(..) => unreachable!("joint variant"),
                }
            }
            MethodKind::CodistillCeIndependent => {
                history.push_back((w1.clone(), w2.clone()));
                while history.len() > m.stale_t + 1 {
                    history.pop_front();
                }
                let (s1, s2) = history.front().expect("just pushed");
                let t1 = forward_probs(s2, &xb).map_err(|e| e.at_step(step))?;
                let t2 = forward_probs(s1, &xb).map_err(|e| e.at_step(step))?;
                let t1 = tape.constant(Matrix::new(t1.n(), t1.k(), t1.data().to_vec())?);
                let t2 = tape.constant(Matrix::new(t2.n(), t2.k(), t2.data().to_vec())?);
                let (l1, l2) = codistill_independent(&mut tape, p1, p2, t1, t2, &yb, beta_t)?;
                // The two losses share no parameters, so one sweep over the
                // sum yields each model's own gradient.
                tape.add(l1, l2)?
            }
            MethodKind::Combined => {
                let alpha_t = coefficient_at(&alpha, step);
                combined_loss(&mut tape, p1, p2, &yb, alpha_t, beta_t, m.reg_kind)?
            }
            other => return Err(Error::Usage(format!("{other} trains a single model"))),
        };
        finite_loss(&tape, loss).map_err(|e| e.at_step(step))?;
        let grads = tape.backward(loss)?;
        let g1 = b1.flat_grad(&tape, &grads);
        let g2 = b2.flat_grad(&tape, &grads);
        let lr = lr_at(&config.schedule, step);
        step_model(&mut w1, &g1, &mut o1, lr, step)?;
        step_model(&mut w2, &g2, &mut o2, lr, step)?;
    }
    Ok((init, w1))
}

/// Model 1's initial and final parameters, plus ensemble details.
type Trained = (ModelParams, ModelParams, Option<EnsembleInfo>);

fn train_ensemble(
    config: &ExperimentConfig,
    prep: &Prepared,
    bundle: SeedBundle,
    teachers: &[SeedBundle],
) -> Result<Trained> {
    if teachers.is_empty() {
        return Err(Error::Usage("an ensemble needs at least one teacher".into()));
    }
    let mut train_probs = Vec::with_capacity(teachers.len());
    let mut eval_probs = Vec::with_capacity(teachers.len());
    let mut teacher_accuracy = Vec::with_capacity(teachers.len());
    for &tb in teachers {
        let (_, w) = train_single(config, prep, tb, MethodKind::Baseline, None)?;
        let pe = forward_probs(&w, &prep.eval_x)?;
        teacher_accuracy.push(accuracy(&pe, &prep.eval_y)?);
        train_probs.push(forward_probs(&w, &prep.train_x)?);
        eval_probs.push(pe);
    }
    let mean_train = ProbMatrix::mean_of(&train_probs.iter().collect::<Vec<_>>())?;
    let mean_eval = ProbMatrix::mean_of(&eval_probs.iter().collect::<Vec<_>>())?;
    let info = EnsembleInfo {
        teacher_bundles: teachers.to_vec(),
        teacher_accuracy,
        ensemble_accuracy: accuracy(&mean_eval, &prep.eval_y)?,
    };
    let (init, w) = train_single(config, prep, bundle, MethodKind::EnsembleDistill, Some(&mean_train))?;
    Ok((init, w, Some(info)))
}

fn train_any(config: &ExperimentConfig, prep: &Prepared, bundle: SeedBundle, teachers: Option<&[SeedBundle]>) -> Result<Trained> {
    let kind = config.method.kind;
    match kind {
        MethodKind::EnsembleDistill => {
            let derived: Vec<SeedBundle>;
            let teachers = match teachers {
                Some(t) => t,
                None => {
                    derived = (0..config.method.n_teachers).map(|j| teacher_bundle(bundle, j)).collect();
                    &derived
                }
            };
            train_ensemble(config, prep, bundle, teachers)
        }
        k if k.is_two_model() => train_pair(config, prep, bundle).map(|(a, b)| (a, b, None)),
        k => train_single(config, prep, bundle, k, None).map(|(a, b)| (a, b, None)),
    }
}

fn build_artifact(
    config: &ExperimentConfig,
    prep: &Prepared,
    bundle: SeedBundle,
    run_index: usize,
    teachers: Option<&[SeedBundle]>,
) -> Result<RunArtifact> {
    let start = Instant::now();
    let (init, fin, ensemble) = train_any(config, prep, bundle, teachers)?;
    let eval_probs = forward_probs(&fin, &prep.eval_x)?;
    Ok(RunArtifact {
        config_digest: config.digest(),
        run_index,
        method: config.method.label(),
        bundle,
        accuracy: accuracy(&eval_probs, &prep.eval_y)?,
        mean_entropy: mean_entropy(&eval_probs),
        mean_confidence: mean_confidence(&eval_probs),
        probs_digest: hex(digest_f64s(eval_probs.data())),
        eval_probs,
        eval_labels: prep.eval_y.clone(),
        eval_digest: prep.eval_digest.clone(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        steps: config.total_steps,
        init_params_digest: hex(init.digest()),
        final_params_digest: hex(fin.digest()),
        ensemble,
    })
}

/// Trains run `run_index` on prepared data and persists the outcome (the
/// artifact, or a failure record) when `config.out_dir` is set.
pub fn run_prepared(
    config: &ExperimentConfig,
    prep: &Prepared,
    bundle: SeedBundle,
    run_index: usize,
    teachers: Option<&[SeedBundle]>,
) -> Result<RunArtifact> {
    let result = build_artifact(config, prep, bundle, run_index, teachers);
    if let Some(dir) = &config.out_dir {
        match &result {
            Ok(art) => {
                art.save(dir)?;
            }
            Err(e) => {
                let step = match e {
                    Error::Numeric { step, .. } => *step,
                    _ => None,
                };
                let rec = FailedRun {
                    config_digest: config.digest(),
                    run_index,
                    bundle,
                    step,
                    error: e.to_string(),
                };
                write_json_atomic(&dir.join(failed_file_name(&rec.config_digest, run_index)), &rec)?;
            }
        }
    }
    result
}

/// Trains one run with `bundle`. For two-model objectives the artifact
/// describes model 1.
pub fn run_training(config: &ExperimentConfig, bundle: SeedBundle) -> Result<RunArtifact> {
    run_training_indexed(config, bundle, 0)
}

pub fn run_training_indexed(config: &ExperimentConfig, bundle: SeedBundle, run_index: usize) -> Result<RunArtifact> {
    let prep = Prepared::load(config)?;
    run_prepared(config, &prep, bundle, run_index, None)
}

/// Ensemble distillation with teachers derived from `bundle`.
pub fn ensemble_distill_run(config: &ExperimentConfig, bundle: SeedBundle) -> Result<RunArtifact> {
    if config.method.kind != MethodKind::EnsembleDistill {
        return Err(Error::Config(format!(
            "method.kind is {}, expected ensemble_distill",
            config.method.kind
        )));
    }
    run_training(config, bundle)
}

/// Ensemble distillation with explicit teacher bundles; any count ≥ 1.
pub fn ensemble_distill_with_teachers(
    config: &ExperimentConfig,
    bundle: SeedBundle,
    teachers: &[SeedBundle],
) -> Result<RunArtifact> {
    let mut config = config.clone();
    config.method.kind = MethodKind::EnsembleDistill;
    let prep = Prepared::load(&config)?;
    run_prepared(&config, &prep, bundle, 0, Some(teachers))
}

/// Initial parameters a run with `bundle` starts from (model 1).
pub fn initial_params(config: &ExperimentConfig, bundle: SeedBundle) -> Result<ModelParams> {
    let prep = Prepared::load(config)?;
    ModelParams::init(&prep.sizes, bundle.init_seed)
}
