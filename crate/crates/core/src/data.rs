//! Instance schema and the synthetic multi-view behavior generator.
//!
//! The generative story: items belong to interest clusters; each user has a
//! long-term habit cluster and a short-term cluster; each request draws a
//! session cluster (the short-term one, or a random drift cluster with
//! probability delta). The long/short/real-time sequences sample from the
//! habit/short/session clusters respectively, with each behavior replaced
//! by a uniform random item with probability rho. The label is 1 iff the
//! target's cluster matches the session cluster, so the real-time view
//! carries the decisive signal — models that calibrate their query on
//! real-time triggers have something genuine to exploit.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::rng::SplitMix64;

/// One training/evaluation example. Sequences are ordered oldest to newest.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Instance {
    pub request_id: u64,
    pub user_id: u32,
    pub context_id: u32,
    pub target_item_id: u32,
    pub seq_rt: Vec<u32>,
    pub seq_st: Vec<u32>,
    pub seq_lt: Vec<u32>,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct GeneratorConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_contexts: usize,
    pub n_clusters: usize,
    pub t_rt: usize,
    pub t_st: usize,
    pub t_lt: usize,
    /// Probability each behavior is replaced by a uniform random item.
    pub noise_rate: f64,
    /// Probability the session cluster drifts away from the short-term one.
    pub drift_prob: f64,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_users: 2000,
            n_items: 500,
            n_contexts: 16,
            n_clusters: 8,
            t_rt: 5,
            t_st: 20,
            t_lt: 50,
            noise_rate: 0.3,
            drift_prob: 0.4,
            negatives_per_positive: 4,
            seed: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        let bad = |msg: String| Err(CoreError::InvalidConfig(msg));
        if self.n_users == 0 || self.n_items == 0 || self.n_contexts == 0 {
            return bad("n_users, n_items, n_contexts must be positive".into());
        }
        if self.n_clusters == 0 || self.n_clusters > self.n_items {
            return bad(alloc::format!(
                "n_clusters {} must be in [1, n_items={}]",
                self.n_clusters,
                self.n_items
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(alloc::format!("noise_rate {} outside [0, 1]", self.noise_rate));
        }
        if !(0.0..=1.0).contains(&self.drift_prob) {
            return bad(alloc::format!("drift_prob {} outside [0, 1]", self.drift_prob));
        }
        if self.n_clusters == 1 && self.negatives_per_positive > 0 {
            return bad("degenerate single-cluster config: negatives need other clusters".into());
        }
        Ok(())
    }

    /// Cluster of an item: clusters take `n_items / n_clusters` items each,
    /// the last one takes the remainder.
    pub fn cluster_of(&self, item: u32) -> usize {
        let base = self.n_items / self.n_clusters;
        ((item as usize / base.max(1)).min(self.n_clusters - 1)) as usize
    }

    fn cluster_range(&self, cluster: usize) -> (usize, usize) {
        let base = self.n_items / self.n_clusters;
        let lo = cluster * base;
        let hi = if cluster + 1 == self.n_clusters { self.n_items } else { lo + base };
        (lo, hi)
    }

    fn sample_in_cluster(&self, cluster: usize, rng: &mut SplitMix64) -> u32 {
        let (lo, hi) = self.cluster_range(cluster);
        (lo + rng.below(hi - lo)) as u32
    }

    fn sample_outside_cluster(&self, cluster: usize, rng: &mut SplitMix64) -> u32 {
        let mut other = rng.below(self.n_clusters - 1);
        if other >= cluster {
            other += 1;
        }
        self.sample_in_cluster(other, rng)
    }

    fn sample_sequence(&self, cluster: usize, len: usize, rng: &mut SplitMix64) -> Vec<u32> {
        (0..len)
            .map(|_| {
                if rng.chance(self.noise_rate) {
                    rng.below(self.n_items) as u32
                } else {
                    self.sample_in_cluster(cluster, rng)
                }
            })
            .collect()
    }
}

/// Generate one request per user: 1 positive + `negatives_per_positive`
/// negatives sharing the request id. Deterministic given the seed.
pub fn generate(cfg: &GeneratorConfig) -> Result<Vec<Instance>, CoreError> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_users * (1 + cfg.negatives_per_positive));

    for user in 0..cfg.n_users {
        let c_habit = rng.below(cfg.n_clusters);
        let c_short = rng.below(cfg.n_clusters);
        let c_sess =
            if rng.chance(cfg.drift_prob) { rng.below(cfg.n_clusters) } else { c_short };
        let context_id = rng.below(cfg.n_contexts) as u32;

        let seq_lt = cfg.sample_sequence(c_habit, cfg.t_lt, &mut rng);
        let seq_st = cfg.sample_sequence(c_short, cfg.t_st, &mut rng);
        let seq_rt = cfg.sample_sequence(c_sess, cfg.t_rt, &mut rng);

        let base = Instance {
            request_id: user as u64,
            user_id: user as u32,
            context_id,
            target_item_id: 0,
            seq_rt,
            seq_st,
            seq_lt,
            label: 1,
        };

        let mut positive = base.clone();
        positive.target_item_id = cfg.sample_in_cluster(c_sess, &mut rng);
        out.push(positive);

        for _ in 0..cfg.negatives_per_positive {
            let mut negative = base.clone();
            negative.target_item_id = cfg.sample_outside_cluster(c_sess, &mut rng);
            negative.label = 0;
            out.push(negative);
        }
    }
    Ok(out)
}

/// Which split a whole request belongs to. Hashing the request id keeps all
/// candidates of one request together and makes the split independent of
/// file order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

pub fn split_of(request_id: u64) -> Split {
    // splitmix64 finalizer as the hash
    let mut z = request_id.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    match z % 10 {
        0..=7 => Split::Train,
        8 => Split::Val,
        _ => Split::Test,
    }
}

/// Partition instances into (train, val, test) by request hash, 80/10/10.
pub fn split_dataset(instances: Vec<Instance>) -> (Vec<Instance>, Vec<Instance>, Vec<Instance>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for inst in instances {
        match split_of(inst.request_id) {
            Split::Train => train.push(inst),
            Split::Val => val.push(inst),
            Split::Test => test.push(inst),
        }
    }
    (train, val, test)
}
