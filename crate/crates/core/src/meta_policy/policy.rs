use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spaces::ActionSpaces;
use super::MetaError;

/// Independent categorical logits per action slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub logits: Vec<Vec<f64>>,
    pub meta_lr: f64,
}

impl PolicyParams {
    /// All-zero logits, i.e. the uniform policy.
    pub fn uniform(spaces: &ActionSpaces, meta_lr: f64) -> Self {
        PolicyParams {
            logits: (0..spaces.n_slots()).map(|s| vec![0.0; spaces.slot_size(s)]).collect(),
            meta_lr,
        }
    }

    pub fn probabilities(&self, slot: usize) -> Vec<f64> {
        softmax(&self.logits[slot])
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub slot: usize,
    pub index: usize,
    pub log_prob: f64,
    pub reward: f64,
}

/// Decisions of one or more rounds. `horizon` counts decision rounds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub horizon: usize,
    pub explored: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploreSchedule {
    pub p_explore: f64,
    pub stream: u64,
}

impl ExploreSchedule {
    pub fn new(p_explore: f64, stream: u64) -> Result<Self, MetaError> {
        if !(0.0..=1.0).contains(&p_explore) {
            return Err(MetaError::Invalid(format!("p_explore {p_explore} outside [0, 1]")));
        }
        Ok(ExploreSchedule { p_explore, stream })
    }

    /// One explore/exploit decision. The uniform draw is consumed even on
    /// the first epoch so the stream position never depends on the epoch.
    pub fn explore(&self, first_epoch: bool, rng: &mut impl Rng) -> bool {
        let draw: f64 = rng.random();
        first_epoch || draw < self.p_explore
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionDraw {
    /// Chosen grid index per requested slot.
    pub indices: Vec<usize>,
    /// One step per slot on policy rounds (reward 0 until assigned); empty
    /// on exploration rounds.
    pub trajectory: Trajectory,
    pub explored: bool,
}

/// Sample `slots`: uniformly when exploring, else from `softmax(logits)`.
/// `explored` forces the exploration branch (for slots sampled inside a
/// round already decided to explore); otherwise the schedule decides.
pub fn sample_actions(
    policy: &PolicyParams,
    spaces: &ActionSpaces,
    slots: &[usize],
    schedule: &ExploreSchedule,
    first_epoch: bool,
    rng: &mut impl Rng,
) -> ActionDraw {
    let explored = schedule.explore(first_epoch, rng);
    draw_slots(policy, spaces, slots, explored, rng)
}

pub(crate) fn draw_slots(
    policy: &PolicyParams,
    spaces: &ActionSpaces,
    slots: &[usize],
    explored: bool,
    rng: &mut impl Rng,
) -> ActionDraw {
    let mut indices = Vec::with_capacity(slots.len());
    let mut steps = Vec::new();
    for &slot in slots {
        if explored {
            indices.push(rng.random_range(0..spaces.slot_size(slot)));
        } else {
            let p = policy.probabilities(slot);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut index = p.len() - 1;
            for (i, pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    index = i;
                    break;
                }
            }
            indices.push(index);
            steps.push(TrajectoryStep {
                slot,
                index,
                log_prob: p[index].ln(),
                reward: 0.0,
            });
        }
    }
    ActionDraw {
        indices,
        trajectory: Trajectory {
            steps,
            horizon: 1,
            explored,
        },
        explored,
    }
}

/// `∇_logits Σ_t log π(a_t) · (R_t − baseline)`; the gradient of the log
/// softmax at the chosen index is `onehot − p`.
pub fn reinforce_gradient(policy: &PolicyParams, trajectory: &Trajectory, baseline: f64) -> Vec<Vec<f64>> {
    let mut grad: Vec<Vec<f64>> = policy.logits.iter().map(|l| vec![0.0; l.len()]).collect();
    for step in &trajectory.steps {
        let advantage = step.reward - baseline;
        let p = policy.probabilities(step.slot);
        for (i, (g, pi)) in grad[step.slot].iter_mut().zip(&p).enumerate() {
            let onehot = if i == step.index { 1.0 } else { 0.0 };
            *g += advantage * (onehot - pi);
        }
    }
    grad
}

/// Gradient ascent on the REINFORCE objective: `logits += α (R − b) ∇ log π`.
pub fn reinforce_update(policy: &mut PolicyParams, trajectory: &Trajectory, baseline: f64) -> Result<(), MetaError> {
    if trajectory.explored {
        return Err(MetaError::ExplorationTrajectory);
    }
    let grad = reinforce_gradient(policy, trajectory, baseline);
    let updated: Vec<Vec<f64>> = policy
        .logits
        .iter()
        .zip(&grad)
        .map(|(l, g)| l.iter().zip(g).map(|(l, g)| l + policy.meta_lr * g).collect())
        .collect();
    if updated.iter().flatten().any(|v| !v.is_finite()) {
        return Err(MetaError::NonFiniteUpdate);
    }
    policy.logits = updated;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta_policy::spaces::{HyperActionSpace, LambdaActionSpace};
    use crate::numcore::{Graph, Tensor};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spaces(groups: usize, grid: usize) -> ActionSpaces {
        ActionSpaces::new(
            LambdaActionSpace::new((1..=grid).map(|i| i as f64).collect(), groups).unwrap(),
            HyperActionSpace {
                lr_grid: vec![0.1, 0.2],
                decay_grid: vec![1.0],
                width_grid: vec![4],
            },
        )
        .unwrap()
    }

    #[test]
    fn schedule_extremes() {
        let s = spaces(2, 3);
        let policy = PolicyParams::uniform(&s, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let always = ExploreSchedule::new(1.0, 0).unwrap();
        let never = ExploreSchedule::new(0.0, 0).unwrap();
        for _ in 0..200 {
            assert!(sample_actions(&policy, &s, &[0, 1], &always, false, &mut rng).explored);
            let d = sample_actions(&policy, &s, &[0, 1], &never, false, &mut rng);
            assert!(!d.explored);
            assert_eq!(d.trajectory.steps.len(), 2);
        }
        let first = sample_actions(&policy, &s, &[0, 1], &never, true, &mut rng);
        assert!(first.explored && first.trajectory.steps.is_empty());
        assert!(ExploreSchedule::new(1.5, 0).is_err());
    }

    #[test]
    fn zero_advantage_leaves_logits() {
        let s = spaces(1, 3);
        let mut policy = PolicyParams::uniform(&s, 1.0);
        policy.logits[0] = vec![0.3, -0.2, 1.0];
        let before = policy.clone();
        let traj = Trajectory {
            steps: vec![TrajectoryStep { slot: 0, index: 1, log_prob: 0.0, reward: 0.7 }],
            horizon: 1,
            explored: false,
        };
        reinforce_update(&mut policy, &traj, 0.7).unwrap();
        assert_eq!(policy, before);
    }

    #[test]
    fn uniform_two_action_update() {
        let s = spaces(1, 2);
        let mut policy = PolicyParams::uniform(&s, 1.0);
        let traj = Trajectory {
            steps: vec![TrajectoryStep { slot: 0, index: 0, log_prob: 0.5f64.ln(), reward: 1.0 }],
            horizon: 1,
            explored: false,
        };
        reinforce_update(&mut policy, &traj, 0.0).unwrap();
        assert_eq!(policy.logits[0], vec![0.5, -0.5]);
    }

    #[test]
    fn exploration_rounds_rejected() {
        let s = spaces(1, 2);
        let mut policy = PolicyParams::uniform(&s, 1.0);
        let traj = Trajectory { steps: vec![], horizon: 1, explored: true };
        assert_eq!(reinforce_update(&mut policy, &traj, 0.0), Err(MetaError::ExplorationTrajectory));
    }

    /// The closed-form score function agrees with reverse-mode autodiff of
    /// `log_softmax(logits)[a]`.
    #[test]
    fn score_function_matches_autodiff() {
        let logits = vec![0.4, -1.2, 2.0, 0.1];
        let s = spaces(1, 4);
        let mut policy = PolicyParams::uniform(&s, 1.0);
        policy.logits[0] = logits.clone();
        for a in 0..4 {
            let traj = Trajectory {
                steps: vec![TrajectoryStep { slot: 0, index: a, log_prob: 0.0, reward: 1.0 }],
                horizon: 1,
                explored: false,
            };
            let closed = reinforce_gradient(&policy, &traj, 0.0);
            let mut g = Graph::new();
            let grp = g.add_group("logits");
            let l = g.param(grp, Tensor::vector(logits.clone()));
            let lp = g.log_softmax(l);
            let pick = g.slice(lp, 0, a, a + 1);
            let out = g.sum(pick);
            g.forward_eval(&[], out).unwrap();
            let auto = g.backward(out).unwrap().flat_group(0);
            for (c, v) in closed[0].iter().zip(&auto) {
                assert!((c - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn policy_sampling_follows_probabilities() {
        let s = spaces(1, 3);
        let mut policy = PolicyParams::uniform(&s, 1.0);
        policy.logits[0] = vec![0.0, 1.0, 2.0];
        let p = policy.probabilities(0);
        let never = ExploreSchedule::new(0.0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        let n = 60_000;
        for _ in 0..n {
            counts[sample_actions(&policy, &s, &[0], &never, false, &mut rng).indices[0]] += 1;
        }
        for i in 0..3 {
            let freq = counts[i] as f64 / n as f64;
            assert!((freq - p[i]).abs() < 0.01, "{freq} vs {}", p[i]);
        }
    }

    proptest! {
        #[test]
        fn updates_stay_finite_and_normalised(
            seed in 0u64..1000,
            reward in 0.0f64..1.0,
            baseline in 0.0f64..1.0,
            meta_lr in 0.01f64..1.0,
        ) {
            let s = spaces(2, 4);
            let mut policy = PolicyParams::uniform(&s, meta_lr);
            let never = ExploreSchedule::new(0.0, 0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..50 {
                let mut draw = sample_actions(&policy, &s, &[0, 1], &never, false, &mut rng);
                for step in draw.trajectory.steps.iter_mut() {
                    step.reward = reward;
                }
                reinforce_update(&mut policy, &draw.trajectory, baseline).unwrap();
            }
            for slot in 0..2 {
                let p = policy.probabilities(slot);
                prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
