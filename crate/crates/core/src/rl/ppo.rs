//! Advantage estimation and the clipped-surrogate update.

use ndarray::{Array1, Array2, Axis};

use super::nn::{clip_grad_norm, Adam, Linear};
use super::policy::{log_softmax_heads, Policy};
use super::RlError;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr_actor: 5e-4,
            lr_critic: 1e-3,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 50,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) || !unit(self.lambda) {
            return Err(RlError::Config(format!("gamma {} and lambda {} must lie in [0, 1]", self.gamma, self.lambda)));
        }
        if !(self.clip > 0.0) || !(self.lr_actor > 0.0) || !(self.lr_critic > 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(RlError::Config("clip, learning rates and max_grad_norm must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(RlError::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Generalized advantage estimates and returns for one trajectory segment.
/// `last_value` bootstraps past the final step; pass 0 for a terminal state.
pub fn gae(rewards: &[f64], values: &[f64], last_value: f64, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    if rewards.len() != values.len() {
        return Err(RlError::Shape(format!("{} rewards but {} values", rewards.len(), values.len())));
    }
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lambda) {
        return Err(RlError::Config(format!("gamma {gamma} and lambda {lambda} must lie in [0, 1]")));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = last_value;
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Transitions collected under the policy that is about to be updated.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Raw (un-normalized) observations, one per row.
    pub obs: Array2<f64>,
    pub actions: Vec<Vec<usize>>,
    pub old_log_probs: Array1<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.nrows() == 0
    }

    fn check(&self, policy: &Policy) -> Result<(), RlError> {
        let n = self.len();
        if self.obs.ncols() != policy.obs_dim()
            || self.actions.len() != n
            || self.old_log_probs.len() != n
            || self.advantages.len() != n
            || self.returns.len() != n
        {
            return Err(RlError::Shape("batch columns disagree in length or width".into()));
        }
        for a in &self.actions {
            policy.check_action(a)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Loss `policy - entropy_coef * entropy + value_coef * value` and its
/// gradients with respect to the actor and critic parameters. Advantages are
/// used as given.
pub fn loss_and_grads(policy: &Policy, batch: &Batch, cfg: &PpoConfig) -> (LossParts, Vec<Linear>, Vec<Linear>) {
    let n = batch.len() as f64;
    let x = policy.norm.apply(batch.obs.view());

    let (a_cache, logits) = policy.actor.forward_cached(x.view());
    let logp = log_softmax_heads(&logits, &policy.heads);
    let mut d_logits = Array2::<f64>::zeros(logits.raw_dim());
    let mut parts = LossParts::default();
    for (i, action) in batch.actions.iter().enumerate() {
        let row = logp.row(i);
        let mut lp = 0.0;
        let mut off = 0;
        for (&h, &a) in policy.heads.iter().zip(action) {
            lp += row[off + a];
            off += h;
        }
        let log_ratio = lp - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = batch.advantages[i];
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        parts.policy -= (ratio * adv).min(clipped * adv) / n;
        parts.approx_kl += ((ratio - 1.0) - log_ratio) / n;
        let clip_active = (adv >= 0.0 && ratio > 1.0 + cfg.clip) || (adv < 0.0 && ratio < 1.0 - cfg.clip);
        if (ratio - 1.0).abs() > cfg.clip {
            parts.clip_fraction += 1.0 / n;
        }
        // d(-surrogate/n)/d(log pi)
        let g_lp = if clip_active { 0.0 } else { -ratio * adv / n };

        let mut off = 0;
        for (&h, &a) in policy.heads.iter().zip(action) {
            let mut entropy = 0.0;
            for j in 0..h {
                let l = row[off + j];
                entropy -= l.exp() * l;
            }
            parts.entropy += entropy / n;
            for j in 0..h {
                let l = row[off + j];
                let p = l.exp();
                let onehot = if j == a { 1.0 } else { 0.0 };
                // dH/dz_j = -p_j (log p_j + H)
                let d_ent = -p * (l + entropy);
                d_logits[[i, off + j]] = g_lp * (onehot - p) - cfg.entropy_coef * d_ent / n;
            }
            off += h;
        }
    }

    let (c_cache, values) = policy.critic.forward_cached(x.view());
    let values = values.index_axis(Axis(1), 0).to_owned();
    let err = &values - &batch.returns;
    parts.value = err.mapv(|e| e * e).sum() / n;
    let d_values = (&err * (2.0 * cfg.value_coef / n)).insert_axis(Axis(1));

    parts.total = parts.policy - cfg.entropy_coef * parts.entropy + cfg.value_coef * parts.value;
    let actor_grads = policy.actor.backward(&a_cache, d_logits);
    let critic_grads = policy.critic.backward(&c_cache, d_values.to_owned());
    (parts, actor_grads, critic_grads)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UpdateStats {
    /// Loss terms on the first epoch, before any parameter change.
    pub initial: LossParts,
    /// Loss terms on the last completed epoch.
    pub last: LossParts,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
    pub epochs_run: usize,
    /// Set when a non-finite loss or parameter forced a rollback.
    pub restored: bool,
}

fn grads_finite(g: &[Linear]) -> bool {
    g.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
}

/// Full-batch PPO update. On any non-finite loss, gradient or parameter the
/// policy and optimizer state are restored to their pre-update values.
pub fn ppo_update(
    policy: &mut Policy,
    adam_actor: &mut Adam,
    adam_critic: &mut Adam,
    batch: &Batch,
    cfg: &PpoConfig,
) -> Result<UpdateStats, RlError> {
    cfg.validate()?;
    batch.check(policy)?;
    if batch.is_empty() {
        return Ok(UpdateStats::default());
    }
    let mut work = batch.clone();
    if cfg.normalize_advantages && batch.len() > 1 {
        let mean = work.advantages.mean().unwrap_or(0.0);
        let std = work.advantages.std(0.0);
        work.advantages.mapv_inplace(|a| (a - mean) / (std + 1e-8));
    }
    let saved = (policy.clone(), adam_actor.clone(), adam_critic.clone());
    let mut stats = UpdateStats::default();
    for epoch in 0..cfg.epochs {
        let (parts, mut ga, mut gc) = loss_and_grads(policy, &work, cfg);
        if !parts.total.is_finite() || !grads_finite(&ga) || !grads_finite(&gc) {
            (*policy, *adam_actor, *adam_critic) = saved;
            stats.restored = true;
            return Ok(stats);
        }
        if epoch == 0 {
            stats.initial = parts;
        }
        stats.last = parts;
        stats.actor_grad_norm = clip_grad_norm(&mut ga, cfg.max_grad_norm);
        stats.critic_grad_norm = clip_grad_norm(&mut gc, cfg.max_grad_norm);
        adam_actor.apply(&mut policy.actor, &ga);
        adam_critic.apply(&mut policy.critic, &gc);
        if !policy.all_finite() {
            (*policy, *adam_actor, *adam_critic) = saved;
            stats.restored = true;
            return Ok(stats);
        }
        stats.epochs_run = epoch + 1;
    }
    policy.norm.update(batch.obs.view());
    Ok(stats)
}
