//! Multi-discrete actor-critic with a shared actor trunk and a separate critic.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::nn::Mlp;
use super::RlError;

pub const CLIP_OBS: f64 = 10.0;

/// Running mean/variance of observations (parallel Welford merge).
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
    pub count: f64,
}

impl Normalizer {
    pub fn new(dim: usize) -> Self {
        Self { mean: Array1::zeros(dim), var: Array1::ones(dim), count: 0.0 }
    }

    pub fn update(&mut self, batch: ArrayView2<f64>) {
        let n = batch.nrows() as f64;
        if n == 0.0 {
            return;
        }
        let bmean = batch.mean_axis(Axis(0)).expect("non-empty");
        let bvar = batch.var_axis(Axis(0), 0.0);
        if self.count == 0.0 {
            self.mean = bmean;
            self.var = bvar;
            self.count = n;
            return;
        }
        let total = self.count + n;
        let delta = &bmean - &self.mean;
        let m2 = &self.var * self.count + &bvar * n + &delta * &delta * (self.count * n / total);
        self.mean = &self.mean + &delta * (n / total);
        self.var = m2 / total;
        self.count = total;
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let std = self.var.mapv(|v| (v + 1e-8).sqrt());
        let mut out = (&x - &self.mean) / &std;
        out.mapv_inplace(|v| v.clamp(-CLIP_OBS, CLIP_OBS));
        out
    }
}

/// Per-head log-softmax rows for a batch of concatenated logits.
pub fn log_softmax_heads(logits: &Array2<f64>, heads: &[usize]) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let mut off = 0;
        for &h in heads {
            let seg = row.slice_mut(ndarray::s![off..off + h]);
            let max = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + seg.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            seg.into_iter().for_each(|v| *v -= lse);
            off += h;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub action: Vec<usize>,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub actor: Mlp,
    pub critic: Mlp,
    pub heads: Vec<usize>,
    pub norm: Normalizer,
}

impl Policy {
    /// `hidden` applies to both networks, e.g. `[256, 128]`.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], heads: &[usize], rng: &mut R) -> Self {
        let n_logits: usize = heads.iter().sum();
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend_from_slice(hidden);
        actor_sizes.push(n_logits);
        let mut critic_sizes = vec![obs_dim];
        critic_sizes.extend_from_slice(hidden);
        critic_sizes.push(1);
        // Small output gain keeps the initial policy close to uniform.
        let actor = Mlp::new(&actor_sizes, 0.01, rng);
        let critic = Mlp::new(&critic_sizes, 1.0, rng);
        Self { actor, critic, heads: heads.to_vec(), norm: Normalizer::new(obs_dim) }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn check_action(&self, action: &[usize]) -> Result<(), RlError> {
        if action.len() != self.heads.len() || action.iter().zip(&self.heads).any(|(a, h)| a >= h) {
            return Err(RlError::InvalidAction(action.to_vec()));
        }
        Ok(())
    }

    fn row(&self, obs: ArrayView1<f64>) -> Result<Array2<f64>, RlError> {
        if obs.len() != self.obs_dim() {
            return Err(RlError::Shape(format!("observation has {} values, expected {}", obs.len(), self.obs_dim())));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(RlError::NonFinite("observation".into()));
        }
        Ok(self.norm.apply(obs.insert_axis(Axis(0))))
    }

    pub fn value(&self, obs: ArrayView1<f64>) -> Result<f64, RlError> {
        Ok(self.critic.forward(self.row(obs)?.view())[[0, 0]])
    }

    /// Samples (or, when `greedy`, takes the per-head argmax of) an action.
    pub fn act<R: Rng + ?Sized>(&self, obs: ArrayView1<f64>, greedy: bool, rng: &mut R) -> Result<ActionSample, RlError> {
        let x = self.row(obs)?;
        let logp = log_softmax_heads(&self.actor.forward(x.view()), &self.heads);
        let value = self.critic.forward(x.view())[[0, 0]];
        let mut action = Vec::with_capacity(self.heads.len());
        let mut log_prob = 0.0;
        let mut off = 0;
        for &h in &self.heads {
            let seg = logp.slice(ndarray::s![0, off..off + h]);
            let pick = if greedy {
                // first maximal index
                (0..h).fold(0, |best, i| if seg[i] > seg[best] { i } else { best })
            } else {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = h - 1;
                for i in 0..h {
                    acc += seg[i].exp();
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            };
            log_prob += seg[pick];
            action.push(pick);
            off += h;
        }
        if !log_prob.is_finite() || !value.is_finite() {
            return Err(RlError::NonFinite("policy output".into()));
        }
        Ok(ActionSample { action, log_prob, value })
    }

    /// Joint log-probability of `action` under the current policy.
    pub fn log_prob(&self, obs: ArrayView1<f64>, action: &[usize]) -> Result<f64, RlError> {
        self.check_action(action)?;
        let x = self.row(obs)?;
        let logp = log_softmax_heads(&self.actor.forward(x.view()), &self.heads);
        let mut off = 0;
        let mut total = 0.0;
        for (&h, &a) in self.heads.iter().zip(action) {
            total += logp[[0, off + a]];
            off += h;
        }
        Ok(total)
    }

    pub fn all_finite(&self) -> bool {
        self.actor.all_finite() && self.critic.all_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalizer_merge_matches_direct_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let all = Array2::from_shape_fn((30, 3), |_| rng.random_range(-5.0..5.0));
        let mut n = Normalizer::new(3);
        n.update(all.slice(ndarray::s![..7, ..]));
        n.update(all.slice(ndarray::s![7..20, ..]));
        n.update(all.slice(ndarray::s![20.., ..]));
        let mean = all.mean_axis(Axis(0)).unwrap();
        let var = all.var_axis(Axis(0), 0.0);
        for i in 0..3 {
            assert!((n.mean[i] - mean[i]).abs() < 1e-12);
            assert!((n.var[i] - var[i]).abs() < 1e-12);
        }
        assert_eq!(n.count, 30.0);
    }

    #[test]
    fn heads_are_normalized() {
        let lp = log_softmax_heads(&array![[1.0, 2.0, 3.0, -1.0, 0.5]], &[3, 2]);
        let s1: f64 = lp.slice(ndarray::s![0, 0..3]).iter().map(|v| v.exp()).sum();
        let s2: f64 = lp.slice(ndarray::s![0, 3..5]).iter().map(|v| v.exp()).sum();
        assert!((s1 - 1.0).abs() < 1e-12 && (s2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn act_is_consistent_with_log_prob() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Policy::new(6, &[8, 8], &[5, 5, 3], &mut rng);
        let obs = array![0.1, -0.2, 0.3, 1.0, 2.0, -3.0];
        for greedy in [false, true] {
            let s = p.act(obs.view(), greedy, &mut rng).unwrap();
            assert_eq!(s.action.len(), 3);
            let lp = p.log_prob(obs.view(), &s.action).unwrap();
            assert!((lp - s.log_prob).abs() < 1e-12);
        }
        // near-uniform initial policy
        assert!((p.log_prob(obs.view(), &[0, 0, 0]).unwrap() - (1.0f64 / 75.0).ln()).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Policy::new(2, &[4], &[2, 2], &mut rng);
        assert!(matches!(p.act(array![1.0].view(), true, &mut rng), Err(RlError::Shape(_))));
        assert!(matches!(p.act(array![1.0, f64::NAN].view(), true, &mut rng), Err(RlError::NonFinite(_))));
        assert!(matches!(p.log_prob(array![1.0, 1.0].view(), &[0, 2]), Err(RlError::InvalidAction(_))));
    }
}
