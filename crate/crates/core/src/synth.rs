//! Seeded generator of synthetic threads with planted user archetypes.
//!
//! Users are split into four roles. Appreciated users draw replies, and
//! replies to their posts draw further replies (which defend them in the
//! argument graph); their posts also score higher. Provocateurs reply more
//! and score erratically. Lurkers post rarely. Everyone else is ordinary.
//! Participation rates do not depend on the appreciated role, so only the
//! thread structure and the scores tell the planted users apart. Every user
//! posts at least once in a home conversation, provided the conversations
//! have room for them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Conversation, Post};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Appreciated,
    Provocateur,
    Lurker,
    Ordinary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppreciatedParams {
    /// Parent-selection weight of their posts, relative to 1 for others.
    pub reply_attraction: f64,
    /// Extra weight of posts that reply to them.
    pub defence_attraction: f64,
    pub score_mean: f64,
}

impl Default for AppreciatedParams {
    fn default() -> Self {
        Self {
            reply_attraction: 6.0,
            defence_attraction: 4.0,
            score_mean: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvocateurParams {
    pub fraction: f64,
    pub reply_probability: f64,
    pub score_mean: f64,
    pub score_stddev: f64,
}

impl Default for ProvocateurParams {
    fn default() -> Self {
        Self {
            fraction: 0.05,
            reply_probability: 0.95,
            score_mean: -1.0,
            score_stddev: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LurkerParams {
    pub fraction: f64,
    /// Posting weight relative to 1 for other users.
    pub activity: f64,
}

impl Default for LurkerParams {
    fn default() -> Self {
        Self {
            fraction: 0.2,
            activity: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_conversations: usize,
    /// Inclusive range of posts per conversation.
    pub posts_per_conversation: (usize, usize),
    pub n_users: usize,
    /// Share of users planted as appreciated.
    pub top_fraction: f64,
    /// Distinct participants per conversation, as a share of its posts.
    pub participant_ratio: f64,
    pub appreciated: AppreciatedParams,
    pub provocateur: ProvocateurParams,
    pub lurker: LurkerParams,
    pub ordinary_score_mean: f64,
    pub score_noise_stddev: f64,
    pub min_score: i64,
    pub reply_probability: f64,
    /// Posts this far back are `1/e` as likely to be replied to as the latest.
    pub recency_scale: f64,
    /// Chance that a top-level post mentions an earlier participant.
    pub mention_probability: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_conversations: 50,
            posts_per_conversation: (400, 800),
            n_users: 2000,
            top_fraction: 0.05,
            participant_ratio: 0.4,
            appreciated: AppreciatedParams::default(),
            provocateur: ProvocateurParams::default(),
            lurker: LurkerParams::default(),
            ordinary_score_mean: 1.0,
            score_noise_stddev: 3.0,
            min_score: -10,
            reply_probability: 0.75,
            recency_scale: 25.0,
            mention_probability: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if self.n_conversations == 0 || self.n_users == 0 {
            return bad("n_conversations and n_users must be positive");
        }
        let (lo, hi) = self.posts_per_conversation;
        if lo == 0 || lo > hi {
            return bad("posts_per_conversation must satisfy 1 <= min <= max");
        }
        if !(self.top_fraction > 0.0 && self.top_fraction < 1.0) {
            return bad("top_fraction must lie in (0, 1)");
        }
        for (name, p) in [
            ("reply_probability", self.reply_probability),
            ("mention_probability", self.mention_probability),
            ("provocateur.reply_probability", self.provocateur.reply_probability),
            ("provocateur.fraction", self.provocateur.fraction),
            ("lurker.fraction", self.lurker.fraction),
        ] {
            if !unit(p) {
                return Err(SynthError::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.top_fraction + self.provocateur.fraction + self.lurker.fraction > 1.0 {
            return bad("archetype fractions exceed 1");
        }
        if !(self.participant_ratio > 0.0 && self.participant_ratio <= 1.0) {
            return bad("participant_ratio must lie in (0, 1]");
        }
        if self.lurker.activity <= 0.0 || self.appreciated.reply_attraction <= 0.0 || self.appreciated.defence_attraction < 0.0 {
            return bad("activity and attraction weights must be positive");
        }
        if !(self.recency_scale > 0.0) {
            return bad("recency_scale must be positive");
        }
        if self.score_noise_stddev < 0.0 || self.provocateur.score_stddev < 0.0 {
            return bad("standard deviations must be non-negative");
        }
        Ok(())
    }

    pub fn n_top(&self) -> usize {
        (self.top_fraction * self.n_users as f64).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub conversations: Vec<Conversation>,
    pub ground_truth_top: BTreeSet<String>,
    pub roles: BTreeMap<String, Archetype>,
}

/// Planted truth as written next to a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub top: Vec<String>,
    pub roles: BTreeMap<String, Archetype>,
}

impl SynthCorpus {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for c in &self.conversations {
            c.write_jsonl(&mut out)?;
        }
        Ok(())
    }

    pub fn truth(&self, seed: u64) -> GroundTruth {
        GroundTruth {
            seed,
            top: self.ground_truth_top.iter().cloned().collect(),
            roles: self.roles.clone(),
        }
    }

    pub fn posts(&self) -> impl Iterator<Item = &Post> {
        self.conversations.iter().flat_map(|c| c.posts())
    }
}

pub fn user_name(i: usize) -> String {
    format!("user{i:05}")
}

fn assign_roles(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Archetype> {
    let n = cfg.n_users;
    let n_top = cfg.n_top();
    let n_prov = (cfg.provocateur.fraction * n as f64).floor() as usize;
    let n_lurk = (cfg.lurker.fraction * n as f64).floor() as usize;
    let order = index::sample(rng, n, n).into_vec();
    let mut roles = vec![Archetype::Ordinary; n];
    for (rank, &u) in order.iter().enumerate() {
        roles[u] = if rank < n_top {
            Archetype::Appreciated
        } else if rank < n_top + n_prov {
            Archetype::Provocateur
        } else if rank < n_top + n_prov + n_lurk {
            Archetype::Lurker
        } else {
            Archetype::Ordinary
        };
    }
    roles
}

fn activity(cfg: &SynthConfig, role: Archetype) -> f64 {
    match role {
        Archetype::Lurker => cfg.lurker.activity,
        _ => 1.0,
    }
}

const MENTION_FORMS: [&str; 3] = ["@", "u/", "/u/"];

fn generate_conversation(cfg: &SynthConfig, roles: &[Archetype], home: &[usize], conv: usize) -> Conversation {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(conv as u64 + 1);
    let conv_id = format!("conv{conv:04}");
    let (lo, hi) = cfg.posts_per_conversation;
    let n_posts = rng.random_range(lo..=hi);

    let n_part = ((n_posts as f64 * cfg.participant_ratio).ceil() as usize).clamp(1, cfg.n_users);
    let mut participants: Vec<usize> = index::sample_weighted(&mut rng, cfg.n_users, |u| activity(cfg, roles[u]), n_part)
        .expect("activity weights are positive")
        .into_vec();
    participants.extend_from_slice(home);
    participants.sort_unstable();
    participants.dedup();
    let author_dist = WeightedIndex::new(participants.iter().map(|&u| activity(cfg, roles[u]))).expect("positive weights");
    // home users post at least once, at random positions
    let forced = home.len().min(n_posts);
    let mut schedule: Vec<usize> = (0..n_posts - forced)
        .map(|_| participants[author_dist.sample(&mut rng)])
        .collect();
    for &u in &home[..forced] {
        let at = rng.random_range(0..=schedule.len());
        schedule.insert(at, u);
    }

    let noise = Normal::new(0.0, cfg.score_noise_stddev).expect("valid stddev");
    let provocateur_noise = Normal::new(0.0, cfg.provocateur.score_stddev).expect("valid stddev");

    let base_time = 1_600_000_000 + conv as i64 * 1_000_000;
    let mut posts: Vec<Post> = Vec::with_capacity(n_posts);
    let mut authors: Vec<usize> = Vec::with_capacity(n_posts);
    // parent-selection weight of each earlier post
    let mut weights: Vec<f64> = Vec::with_capacity(n_posts);

    for i in 0..n_posts {
        let author = schedule[i];
        let role = roles[author];
        let reply_p = match role {
            Archetype::Provocateur => cfg.provocateur.reply_probability,
            _ => cfg.reply_probability,
        };
        let mut parent = None;
        if i > 0 && rng.random_bool(reply_p) {
            let decay = (-1.0 / cfg.recency_scale).exp();
            let mut eligible: Vec<(usize, f64)> = Vec::with_capacity(i);
            let mut factor = 1.0;
            for j in (0..i).rev() {
                if authors[j] != author {
                    eligible.push((j, weights[j] * factor));
                }
                factor *= decay;
                if factor < 1e-6 {
                    break;
                }
            }
            let total: f64 = eligible.iter().map(|(_, w)| w).sum();
            if total > 0.0 {
                let mut u = rng.random_range(0.0..total);
                for &(j, w) in &eligible {
                    if u < w {
                        parent = Some(j);
                        break;
                    }
                    u -= w;
                }
                // floating point leftovers land on the oldest candidate
                if parent.is_none() {
                    parent = eligible.last().map(|&(j, _)| j);
                }
            }
        }

        let mut body = format!("post {i} in {conv_id}");
        if parent.is_none() && i > 0 && rng.random_bool(cfg.mention_probability) {
            let earlier: Vec<usize> = authors.iter().copied().filter(|&a| a != author).collect();
            if !earlier.is_empty() {
                let target = earlier[rng.random_range(0..earlier.len())];
                let form = MENTION_FORMS[rng.random_range(0..MENTION_FORMS.len())];
                body = format!("{form}{} {body}", user_name(target));
            }
        }

        let raw = match role {
            Archetype::Appreciated => cfg.appreciated.score_mean + noise.sample(&mut rng),
            Archetype::Provocateur => cfg.provocateur.score_mean + provocateur_noise.sample(&mut rng),
            _ => cfg.ordinary_score_mean + noise.sample(&mut rng),
        };
        let score = (raw.round() as i64).max(cfg.min_score);

        let mut weight = match role {
            Archetype::Appreciated => cfg.appreciated.reply_attraction,
            _ => 1.0,
        };
        if let Some(p) = parent {
            if roles[authors[p]] == Archetype::Appreciated && role != Archetype::Appreciated {
                weight += cfg.appreciated.defence_attraction;
            }
        }

        posts.push(Post {
            post_id: format!("{conv_id}-p{i:04}"),
            conversation_id: conv_id.clone(),
            author_id: user_name(author),
            parent_id: parent.map(|p| posts[p].post_id.clone()),
            body,
            timestamp: base_time + 60 * i as i64,
            score,
            ordinal: i,
        });
        authors.push(author);
        weights.push(weight);
    }
    Conversation::from_parts(conv_id, posts)
}

/// Generates the corpus. Each conversation draws from its own stream of the
/// seed, so conversations are built in parallel and the output is stable.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let roles = assign_roles(cfg, &mut rng);
    // every user gets a home conversation in which they post
    let mut homes = vec![Vec::new(); cfg.n_conversations];
    for (k, u) in index::sample(&mut rng, cfg.n_users, cfg.n_users).into_iter().enumerate() {
        homes[k % cfg.n_conversations].push(u);
    }
    let conversations: Vec<Conversation> = (0..cfg.n_conversations)
        .into_par_iter()
        .map(|c| generate_conversation(cfg, &roles, &homes[c], c))
        .collect();
    let ground_truth_top = roles
        .iter()
        .enumerate()
        .filter(|(_, &r)| r == Archetype::Appreciated)
        .map(|(u, _)| user_name(u))
        .collect();
    let roles = roles.iter().enumerate().map(|(u, &r)| (user_name(u), r)).collect();
    Ok(SynthCorpus {
        conversations,
        ground_truth_top,
        roles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::validate_thread;
    use crate::labeling::cumulative_approval;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_conversations: 10,
            posts_per_conversation: (50, 120),
            n_users: 300,
            seed,
            ..SynthConfig::default()
        }
    }

    fn bytes(c: &SynthCorpus) -> Vec<u8> {
        let mut out = Vec::new();
        c.write_jsonl(&mut out).unwrap();
        out
    }

    #[test]
    fn deterministic_and_valid() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        assert_eq!(bytes(&a), bytes(&b));
        assert_ne!(bytes(&a), bytes(&generate(&small(4)).unwrap()));
        for c in &a.conversations {
            assert_eq!(validate_thread(c), vec![]);
        }
    }

    #[test]
    fn planted_set_size() {
        let c = generate(&SynthConfig {
            n_conversations: 2,
            posts_per_conversation: (10, 20),
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(c.ground_truth_top.len(), 100);
        assert_eq!(c.roles.len(), 2000);
    }

    #[test]
    fn planted_users_score_higher() {
        for seed in 1..=5 {
            let c = generate(&small(seed)).unwrap();
            let approvals = cumulative_approval(c.posts());
            let (mut top, mut rest) = (Vec::new(), Vec::new());
            for (u, a) in &approvals {
                if c.ground_truth_top.contains(u) {
                    top.push(a.cumulative_approval as f64);
                } else {
                    rest.push(a.cumulative_approval as f64);
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            assert!(mean(&top) > mean(&rest), "seed {seed}");
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            SynthConfig {
                top_fraction: 0.0,
                ..SynthConfig::default()
            },
            SynthConfig {
                posts_per_conversation: (5, 4),
                ..SynthConfig::default()
            },
            SynthConfig {
                mention_probability: 1.5,
                ..SynthConfig::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(generate(&cfg), Err(SynthError::InvalidConfig(_))));
        }
    }

    #[test]
    fn config_round_trips_with_defaults() {
        let cfg: SynthConfig = serde_json::from_str(r#"{"seed": 9, "n_users": 50}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.posts_per_conversation, (400, 800));
        assert!(serde_json::from_str::<SynthConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
