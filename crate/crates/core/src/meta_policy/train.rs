use serde::{Deserialize, Serialize};

use super::policy::{draw_slots, reinforce_update, ExploreSchedule, PolicyParams};
use super::scaling::{lr_schedule, scale_gradients, scaled_sgd_step};
use super::spaces::{ActionSpaces, HyperActionSpace, HyperChoice, LambdaActionSpace, DEFAULT_LAMBDA_GRID};
use super::MetaError;
use crate::episodes::{Batch, MetaSet, RecordPool};
use crate::learners::{build_learner, count_groups, Evaluation, Learner, LearnerConfig, LearnerError};
use crate::numcore::{NumError, ParamGroup};
use crate::rng::{self, Purpose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaPolicyConfig {
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    pub lr_grid: Vec<f64>,
    #[serde(default = "default_decay_grid")]
    pub decay_grid: Vec<f64>,
    #[serde(default = "default_width_grid")]
    pub width_grid: Vec<usize>,
    pub p_explore: f64,
    pub meta_epochs: usize,
    #[serde(default = "default_true")]
    pub baseline_enabled: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_meta_lr")]
    pub meta_lr: f64,
    #[serde(default = "default_baseline_decay")]
    pub baseline_decay: f64,
    /// Sweeps over the D_train batches per meta-epoch; the learning rate
    /// decays once per sweep.
    #[serde(default = "default_one")]
    pub inner_epochs: usize,
    /// SGD steps on each D_train batch per sweep.
    #[serde(default = "default_one")]
    pub inner_steps: usize,
}

fn default_lambda_grid() -> Vec<f64> {
    DEFAULT_LAMBDA_GRID.to_vec()
}

fn default_decay_grid() -> Vec<f64> {
    vec![1.0]
}

fn default_width_grid() -> Vec<usize> {
    vec![16]
}

fn default_true() -> bool {
    true
}

fn default_meta_lr() -> f64 {
    0.5
}

fn default_baseline_decay() -> f64 {
    0.9
}

fn default_one() -> usize {
    1
}

impl MetaPolicyConfig {
    pub fn new(lr_grid: Vec<f64>, p_explore: f64, meta_epochs: usize) -> Self {
        MetaPolicyConfig {
            lambda_grid: default_lambda_grid(),
            lr_grid,
            decay_grid: default_decay_grid(),
            width_grid: default_width_grid(),
            p_explore,
            meta_epochs,
            baseline_enabled: true,
            seed: 0,
            meta_lr: default_meta_lr(),
            baseline_decay: default_baseline_decay(),
            inner_epochs: 1,
            inner_steps: 1,
        }
    }

    /// Checks every field, reporting the offending key.
    pub fn validate(&self) -> Result<(), MetaError> {
        let field = |name: &str, msg: &str| Err(MetaError::Invalid(format!("{name}: {msg}")));
        LambdaActionSpace::new(self.lambda_grid.clone(), 1)
            .map_err(|e| MetaError::Invalid(format!("lambda_grid: {e}")))?;
        HyperActionSpace {
            lr_grid: self.lr_grid.clone(),
            decay_grid: self.decay_grid.clone(),
            width_grid: self.width_grid.clone(),
        }
        .validate()
        .map_err(|e| MetaError::Invalid(format!("lr_grid/decay_grid/width_grid: {e}")))?;
        if !(0.0..=1.0).contains(&self.p_explore) {
            return field("p_explore", "must lie in [0, 1]");
        }
        if self.meta_epochs == 0 {
            return field("meta_epochs", "must be at least 1");
        }
        if !(self.meta_lr > 0.0 && self.meta_lr <= 1.0) {
            return field("meta_lr", "must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return field("baseline_decay", "must lie in [0, 1)");
        }
        if self.inner_epochs == 0 || self.inner_steps == 0 {
            return field("inner_epochs/inner_steps", "must be at least 1");
        }
        Ok(())
    }

    fn spaces(&self, n_groups: usize) -> Result<ActionSpaces, MetaError> {
        ActionSpaces::new(
            LambdaActionSpace::new(self.lambda_grid.clone(), n_groups)?,
            HyperActionSpace {
                lr_grid: self.lr_grid.clone(),
                decay_grid: self.decay_grid.clone(),
                width_grid: self.width_grid.clone(),
            },
        )
    }
}

/// Learner parameters after one inner SGD step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepEvent {
    pub meta_epoch: usize,
    pub inner_epoch: usize,
    pub batch: usize,
    pub step: usize,
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaEpochRecord {
    pub epoch: usize,
    pub explored: bool,
    pub failed: bool,
    /// The λ vector used on each D_train visit, in visit order.
    pub lambdas: Vec<Vec<f64>>,
    pub hyper: HyperChoice,
    /// Best heldout accuracy reached during the epoch (0 when failed).
    pub heldout_accuracy: f64,
    /// Heldout loss of the best-heldout learner of the epoch.
    pub heldout_loss: Option<f64>,
    pub reward: f64,
    pub best_heldout_so_far: f64,
    /// D_test metrics of the epoch's best-heldout learner.
    pub test: Option<Evaluation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub entries: Vec<MetaEpochRecord>,
    pub best_heldout: f64,
    pub best_epoch: Option<usize>,
    pub best_heldout_loss: Option<f64>,
    pub test: Option<Evaluation>,
    pub policy: PolicyParams,
    /// Parameters of the best-heldout learner; not serialised.
    #[serde(skip)]
    pub best_params: Option<Vec<ParamGroup>>,
}

fn is_divergence(e: &MetaError) -> bool {
    matches!(
        e,
        MetaError::NonFiniteUpdate | MetaError::Learner(LearnerError::Numeric(NumError::NonFinite { .. }))
    )
}

struct Snapshot {
    params: Vec<ParamGroup>,
    heldout: Evaluation,
}

fn ema(baseline: &mut Option<f64>, reward: f64, decay: f64) -> f64 {
    let current = baseline.unwrap_or(reward);
    *baseline = Some(decay * current + (1.0 - decay) * reward);
    current
}

/// Run the meta-training loop.
///
/// Each meta-epoch makes one explore/exploit decision. The hyperparameters
/// are drawn once; λ is drawn once for the whole epoch when exploring and
/// before every D_train visit otherwise. After each visit the heldout
/// accuracy is the reward for that visit's λ draw, and the epoch's best
/// heldout accuracy rewards the hyperparameter draw. Exploration epochs
/// never update the policy and the test split never feeds back into it.
pub fn meta_train(
    config: &MetaPolicyConfig,
    learner: &LearnerConfig,
    pool: &RecordPool,
    meta_set: &MetaSet,
    seed: u64,
    mut observer: Option<&mut dyn FnMut(&StepEvent)>,
) -> Result<RunRecord, MetaError> {
    config.validate()?;
    if meta_set.d_train.is_empty() || meta_set.d_heldout.is_empty() || meta_set.d_test.is_empty() {
        return Err(MetaError::EmptyMetaSet);
    }
    let n_groups = count_groups(learner, pool)?;
    let spaces = config.spaces(n_groups)?;
    let lambda_slots: Vec<usize> = spaces.lambda_slots().collect();
    let hyper_slots: Vec<usize> = spaces.hyper_slots().collect();
    let mut policy = PolicyParams::uniform(&spaces, config.meta_lr);
    let schedule = ExploreSchedule::new(config.p_explore, rng::stream_id(Purpose::Explore, 0, 0))?;
    let mut explore_rng = rng::stream(seed, Purpose::Explore, 0, 0);
    let mut policy_rng = rng::stream(seed, Purpose::Policy, 0, 0);

    let train: Vec<Batch> = meta_set.d_train.iter().map(|ids| pool.batch(ids)).collect();
    let heldout = pool.batch(&meta_set.d_heldout);
    let test = pool.batch(&meta_set.d_test);

    let visits = config.inner_epochs * train.len();
    let mut lambda_baselines: Vec<Option<f64>> = vec![None; visits];
    let mut hyper_baseline: Option<f64> = None;
    let mut entries = Vec::with_capacity(config.meta_epochs);
    let mut best_so_far = 0.0f64;
    let mut best: Option<(usize, f64, Option<f64>, Option<Evaluation>)> = None;
    let mut best_params = None;

    for epoch in 0..config.meta_epochs {
        let explored = schedule.explore(epoch == 0, &mut explore_rng);
        let hyper_draw = draw_slots(&policy, &spaces, &hyper_slots, explored, &mut policy_rng);
        let hyper = spaces.hyper_choice(&hyper_draw.indices);
        let fixed_lambda = explored
            .then(|| draw_slots(&policy, &spaces, &lambda_slots, true, &mut policy_rng).indices);
        let mut init_rng = rng::stream(seed, Purpose::Learner, epoch as u64, 0);
        let mut model = build_learner(learner, pool, hyper.width, &mut init_rng)?;

        let mut used_lambdas = Vec::with_capacity(visits);
        let mut snapshot: Option<Snapshot> = None;
        let mut failed = false;

        'sweeps: for inner_epoch in 0..config.inner_epochs {
            let lr = lr_schedule(hyper.lr, hyper.decay, inner_epoch as u32);
            for (b, batch) in train.iter().enumerate() {
                let visit = inner_epoch * train.len() + b;
                let mut draw = None;
                let indices = match &fixed_lambda {
                    Some(fixed) => fixed.clone(),
                    None => {
                        let d = draw_slots(&policy, &spaces, &lambda_slots, false, &mut policy_rng);
                        let idx = d.indices.clone();
                        draw = Some(d);
                        idx
                    }
                };
                let lambdas = spaces.lambdas(&indices);
                used_lambdas.push(lambdas.clone());

                let outcome = train_visit(model.as_mut(), batch, &heldout, &lambdas, lr, config.inner_steps, |step, params| {
                    if let Some(obs) = observer.as_mut() {
                        obs(&StepEvent {
                            meta_epoch: epoch,
                            inner_epoch,
                            batch: b,
                            step,
                            params,
                        });
                    }
                });
                let (reward, evaluation) = match outcome {
                    Ok(eval) => (eval.accuracy, Some(eval)),
                    Err(e) if is_divergence(&e) => (0.0, None),
                    Err(e) => return Err(e),
                };
                if let Some(mut d) = draw {
                    for step in d.trajectory.steps.iter_mut() {
                        step.reward = reward;
                    }
                    let baseline = if config.baseline_enabled {
                        ema(&mut lambda_baselines[visit], reward, config.baseline_decay)
                    } else {
                        0.0
                    };
                    reinforce_update(&mut policy, &d.trajectory, baseline)?;
                }
                match evaluation {
                    None => {
                        failed = true;
                        break 'sweeps;
                    }
                    Some(eval) => {
                        if snapshot.as_ref().is_none_or(|s| eval.accuracy > s.heldout.accuracy) {
                            snapshot = Some(Snapshot {
                                params: model.groups().to_vec(),
                                heldout: eval,
                            });
                        }
                    }
                }
            }
        }

        let (reward, heldout_loss, test_eval) = match (&snapshot, failed) {
            (Some(s), false) => {
                model.groups_mut().clone_from_slice(&s.params);
                let t = model.evaluate(&test)?;
                (s.heldout.accuracy, Some(s.heldout.loss), Some(t))
            }
            _ => (0.0, None, None),
        };
        if !explored {
            let mut traj = hyper_draw.trajectory;
            for step in traj.steps.iter_mut() {
                step.reward = reward;
            }
            let baseline = if config.baseline_enabled {
                ema(&mut hyper_baseline, reward, config.baseline_decay)
            } else {
                0.0
            };
            reinforce_update(&mut policy, &traj, baseline)?;
        }
        if !failed && snapshot.is_some() && best.as_ref().is_none_or(|b| reward > b.1) {
            best = Some((epoch, reward, heldout_loss, test_eval.clone()));
            best_params = snapshot.map(|s| s.params);
        }
        best_so_far = best_so_far.max(reward);
        entries.push(MetaEpochRecord {
            epoch,
            explored,
            failed,
            lambdas: used_lambdas,
            hyper,
            heldout_accuracy: reward,
            heldout_loss,
            reward,
            best_heldout_so_far: best_so_far,
            test: test_eval,
        });
    }

    let (best_epoch, best_heldout_loss, test_eval) = match best {
        Some((e, _, loss, t)) => (Some(e), loss, t),
        None => (None, None, None),
    };
    Ok(RunRecord {
        seed,
        entries,
        best_heldout: best_so_far,
        best_epoch,
        best_heldout_loss,
        test: test_eval,
        policy,
        best_params,
    })
}

/// Scaled SGD steps on one D_train batch, then a heldout evaluation.
fn train_visit(
    model: &mut dyn Learner,
    batch: &Batch,
    heldout: &Batch,
    lambdas: &[f64],
    lr: f64,
    steps: usize,
    mut on_step: impl FnMut(usize, Vec<f64>),
) -> Result<Evaluation, MetaError> {
    for step in 0..steps {
        let (loss, grads) = model.loss_and_gradients(batch)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(MetaError::NonFiniteUpdate);
        }
        let scaled = scale_gradients(&grads, lambdas)?;
        scaled_sgd_step(model.groups_mut(), &scaled, lr)?;
        on_step(step, model.flat_params());
    }
    let eval = model.evaluate(heldout)?;
    if !eval.loss.is_finite() {
        return Err(MetaError::NonFiniteUpdate);
    }
    Ok(eval)
}

/// Ordinary SGD over the same D_train schedule and learner initialisation
/// that `meta_train` uses for meta-epoch `epoch`. Returns the final groups.
#[allow(clippy::too_many_arguments)]
pub fn plain_sgd(
    learner: &LearnerConfig,
    pool: &RecordPool,
    meta_set: &MetaSet,
    hyper: HyperChoice,
    inner_epochs: usize,
    inner_steps: usize,
    seed: u64,
    epoch: usize,
    mut observer: impl FnMut(&StepEvent),
) -> Result<Vec<ParamGroup>, MetaError> {
    let mut init_rng = rng::stream(seed, Purpose::Learner, epoch as u64, 0);
    let mut model = build_learner(learner, pool, hyper.width, &mut init_rng)?;
    for inner_epoch in 0..inner_epochs {
        let lr = hyper.lr * hyper.decay.powi(inner_epoch as i32);
        for (b, ids) in meta_set.d_train.iter().enumerate() {
            let batch = pool.batch(ids);
            for step in 0..inner_steps {
                let (_, grads) = model.loss_and_gradients(&batch)?;
                for (group, g) in model.groups_mut().iter_mut().zip(&grads.groups) {
                    for (t, gt) in group.tensors.iter_mut().zip(g) {
                        for (p, d) in t.values_mut().iter_mut().zip(gt.values()) {
                            *p -= lr * d;
                        }
                    }
                }
                observer(&StepEvent {
                    meta_epoch: epoch,
                    inner_epoch,
                    batch: b,
                    step,
                    params: model.flat_params(),
                });
            }
        }
    }
    Ok(model.groups().to_vec())
}
