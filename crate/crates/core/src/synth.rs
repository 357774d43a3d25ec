//! Seeded synthetic war-blogger corpus with planted effects, used by the
//! examples and the end-to-end tests.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Channel, Corpus, MoralVector, Post, RefKind, Reference, Stance};
use crate::error::Result;
use crate::labels::{AnnotatorKind, GoldRecord, LabelVector};
use crate::timeline::{crisis_windows, in_windows, Community, EventRegistry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Channels per community.
    pub channels_per_community: usize,
    pub posts: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Othering share among posts inside crisis windows.
    pub rate_in_window: f64,
    pub rate_out_window: f64,
    /// Mean shift of othering posts' views, in units of the channel's view
    /// standard deviation.
    pub view_lift: f64,
    /// Channels per community whose stance is declared (propagation seeds).
    pub seeds_per_community: usize,
    pub gold_posts: usize,
    pub human_annotators: usize,
    /// Per-category flip probability of each simulated human.
    pub human_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            channels_per_community: 20,
            posts: 5000,
            start: NaiveDate::from_ymd_opt(2022, 2, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2023, 2, 28).expect("valid date"),
            rate_in_window: 0.25,
            rate_out_window: 0.10,
            view_lift: 0.5,
            seeds_per_community: 4,
            gold_posts: 300,
            human_annotators: 3,
            human_noise: 0.04,
        }
    }
}

impl SynthConfig {
    /// A few hundred posts, for quick runs.
    pub fn small(seed: u64) -> Self {
        SynthConfig {
            seed,
            channels_per_community: 6,
            posts: 600,
            gold_posts: 120,
            seeds_per_community: 2,
            ..SynthConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Planted labels of every post.
    pub truth: BTreeMap<String, LabelVector>,
    /// Simulated human annotations of the gold sample.
    pub gold: Vec<GoldRecord>,
    /// Channel id -> community for every channel.
    pub communities: BTreeMap<String, Community>,
    pub registry: EventRegistry,
}

const CATEGORY_PHRASES: [&[&str]; 4] = [
    &[
        "They want to erase our language from the schools.",
        "Our traditions are being mocked by foreign curators.",
        "They plan to rewrite our history and sell our heritage.",
        "Our culture will not survive another decade of this.",
    ],
    &[
        "They openly talk about a nuclear strike.",
        "Reports of a dirty bomb being prepared near the plant.",
        "They keep shelling our towns every night.",
        "Their generals promise to wipe us out.",
    ],
    &[
        "The criminal regime lies about every loss.",
        "These war criminals smile for the cameras.",
        "Only pure evil could order such a thing.",
        "The butchers from the capital signed the order.",
    ],
    &[
        "The orcs crawled back into their trenches.",
        "Those zombies march without a thought.",
        "The cockroaches scattered after the first volley.",
        "Vermin like them breed in the basements.",
    ],
];

const NEUTRAL_PHRASES: &[&str] = &[
    "Convoy movement reported near the river crossing.",
    "Weather turned cold and roads are muddy.",
    "Supply lines look stable this morning.",
    "Map update for the northern sector is attached.",
    "Volunteers delivered generators to the hospital.",
    "Long queues at the border checkpoint today.",
    "Prices for fuel went up again in the city.",
    "Interview with a medic from the front is coming tonight.",
    "Power was restored in two districts.",
    "Translation of the ministry briefing below.",
];

/// Relative frequency of each category among othering posts.
const CATEGORY_WEIGHTS: [f64; 4] = [0.2, 0.2, 0.45, 0.15];

fn pick_categories(rng: &mut ChaCha8Rng) -> [bool; 4] {
    let mut flags = [false; 4];
    let draw = |rng: &mut ChaCha8Rng| {
        let mut u: f64 = rng.random();
        for (i, w) in CATEGORY_WEIGHTS.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        3
    };
    flags[draw(rng)] = true;
    if rng.random_bool(0.25) {
        flags[draw(rng)] = true;
    }
    flags
}

fn compose_text(n: usize, flags: [bool; 4], rng: &mut ChaCha8Rng) -> String {
    let mut parts = vec![format!("Dispatch {n}.")];
    parts.push(NEUTRAL_PHRASES.choose(rng).expect("phrases").to_string());
    for (i, f) in flags.iter().enumerate() {
        if *f {
            parts.push(
                CATEGORY_PHRASES[i]
                    .choose(rng)
                    .expect("phrases")
                    .to_string(),
            );
        }
    }
    if rng.random_bool(0.5) {
        parts.push(NEUTRAL_PHRASES.choose(rng).expect("phrases").to_string());
    }
    parts.join(" ")
}

fn channel_id(c: Community, i: usize) -> String {
    let prefix = match c {
        Community::Russian => "ru",
        Community::Ukrainian => "ua",
        Community::Shared => "xx",
    };
    format!("{prefix}_{i:02}")
}

/// Generates the corpus. Othering posts are assigned per community so that
/// exactly `round(rate * n)` posts inside and outside the crisis windows are
/// othering.
pub fn generate(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let registry = EventRegistry::default_registry();
    let communities_list = [Community::Russian, Community::Ukrainian];

    let mut channels = BTreeMap::new();
    let mut communities = BTreeMap::new();
    let mut channel_views = BTreeMap::new();
    for c in communities_list {
        for i in 0..cfg.channels_per_community {
            let id = channel_id(c, i);
            let stance = (i < cfg.seeds_per_community).then_some(match c {
                Community::Russian => Stance::ProRussia,
                _ => Stance::ProUkraine,
            });
            let bio = match stance {
                Some(Stance::ProRussia) => "Frontline reports in support of the Russian army",
                Some(Stance::ProUkraine) => "News from the front, glory to the Ukrainian defenders",
                _ => "Daily war news and maps",
            };
            channels.insert(
                id.clone(),
                Channel {
                    id: id.clone(),
                    declared_stance: stance,
                    bio: Some(bio.to_string()),
                },
            );
            communities.insert(id.clone(), c);
            let base = rng.random_range(500.0..5000.0);
            channel_views.insert(id, (base, base * 0.25));
        }
    }
    let channel_ids: Vec<String> = channels.keys().cloned().collect();

    let span = (cfg.end - cfg.start).num_seconds();
    let start = cfg.start.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
    struct Draft {
        channel: String,
        ts: DateTime<Utc>,
        inside: bool,
    }
    let mut drafts: Vec<Draft> = Vec::with_capacity(cfg.posts);
    let mut windows = BTreeMap::new();
    for c in communities_list {
        windows.insert(c, crisis_windows(&registry, c)?);
    }
    for _ in 0..cfg.posts {
        let channel = channel_ids.choose(&mut rng).expect("channels").clone();
        let ts = start + Duration::seconds(rng.random_range(0..span));
        let inside = in_windows(&windows[&communities[&channel]], ts);
        drafts.push(Draft {
            channel,
            ts,
            inside,
        });
    }
    drafts.sort_by(|a, b| (a.ts, &a.channel).cmp(&(b.ts, &b.channel)));

    // exact othering counts per (community, window) stratum
    let mut othering = vec![false; drafts.len()];
    for c in communities_list {
        for inside in [true, false] {
            let mut idx: Vec<usize> = (0..drafts.len())
                .filter(|&i| communities[&drafts[i].channel] == c && drafts[i].inside == inside)
                .collect();
            let rate = if inside {
                cfg.rate_in_window
            } else {
                cfg.rate_out_window
            };
            let k = (rate * idx.len() as f64).round() as usize;
            idx.shuffle(&mut rng);
            for &i in &idx[..k] {
                othering[i] = true;
            }
        }
    }

    let mut posts = Vec::with_capacity(drafts.len());
    let mut truth = BTreeMap::new();
    for (n, (d, &oth)) in drafts.iter().zip(&othering).enumerate() {
        let id = format!("p{n:05}");
        let flags = if oth {
            pick_categories(&mut rng)
        } else {
            [false; 4]
        };
        let labels = LabelVector::from_categories(flags);
        let mut post = Post::new(
            id.clone(),
            d.channel.clone(),
            d.ts,
            compose_text(n, flags, &mut rng),
        );
        let (base, sd) = channel_views[&d.channel];
        let z: f64 = StandardNormal.sample(&mut rng);
        let lift = if oth { cfg.view_lift } else { 0.0 };
        post.views = Some((base + sd * (z + lift)).max(0.0).round() as u64);
        if rng.random_bool(0.35) {
            let own = communities[&d.channel];
            let same = rng.random_bool(0.9);
            let pool: Vec<&String> = channel_ids
                .iter()
                .filter(|c| *c != &d.channel && (communities[*c] == own) == same)
                .collect();
            if let Some(target) = pool.choose(&mut rng) {
                post.refs.push(Reference {
                    target: (*target).clone(),
                    kind: if rng.random_bool(0.5) {
                        RefKind::Forward
                    } else {
                        RefKind::Mention
                    },
                });
            }
        }
        let [culture, survival, vil, dehum] = flags;
        let b = |rng: &mut ChaCha8Rng, p: f64| rng.random_bool(p.clamp(0.0, 1.0));
        post.moral = Some(MoralVector {
            purity: b(&mut rng, 0.12 + 0.2 * f64::from(u8::from(dehum))),
            authority: b(&mut rng, 0.2),
            equality: b(&mut rng, 0.08 + 0.15 * f64::from(u8::from(vil))),
            loyalty: b(&mut rng, 0.12 + 0.25 * f64::from(u8::from(culture))),
            care: b(&mut rng, 0.15 + 0.2 * f64::from(u8::from(survival))),
            proportionality: b(&mut rng, 0.1),
        });
        post.fear_speech = Some(if oth {
            b(&mut rng, 0.1 + 0.6 * f64::from(u8::from(survival)))
        } else {
            b(&mut rng, 0.01)
        });
        post.hate_speech = Some(if oth {
            b(&mut rng, 0.2 + 0.6 * f64::from(u8::from(vil || dehum)))
        } else {
            b(&mut rng, 0.02)
        });
        post.toxicity = Some(if dehum {
            rng.random_range(0.6..1.0)
        } else if oth {
            rng.random_range(0.2..0.8)
        } else {
            rng.random_range(0.0..0.4)
        });
        truth.insert(id, labels);
        posts.push(post);
    }

    // half of the gold sample is drawn from othering posts
    let (mut positive, mut rest): (Vec<&String>, Vec<&String>) =
        truth.keys().partition(|id| truth[*id].any_category());
    positive.shuffle(&mut rng);
    positive.truncate(cfg.gold_posts / 2);
    rest.shuffle(&mut rng);
    rest.truncate(cfg.gold_posts.saturating_sub(positive.len()));
    let mut gold_ids: Vec<&String> = positive.into_iter().chain(rest).collect();
    gold_ids.sort();
    let mut gold = Vec::new();
    for id in gold_ids {
        for a in 0..cfg.human_annotators {
            let mut flags = truth[id].categories();
            for f in &mut flags {
                if rng.random_bool(cfg.human_noise) {
                    *f = !*f;
                }
            }
            gold.push(GoldRecord {
                post_id: id.clone(),
                annotator_id: format!("human_{}", a + 1),
                kind: AnnotatorKind::Human,
                labels: LabelVector::from_categories(flags),
                explanation: None,
            });
        }
    }

    Ok(SyntheticCorpus {
        corpus: Corpus::new(posts, channels)?,
        truth,
        gold,
        communities,
        registry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::lexicon_labels;

    #[test]
    fn lexicon_recovers_planted_labels() {
        let s = generate(&SynthConfig::small(1)).unwrap();
        for p in s.corpus.posts() {
            assert_eq!(lexicon_labels(&p.text), s.truth[&p.id], "{}", p.text);
        }
    }

    #[test]
    fn deterministic_and_stratified() {
        let cfg = SynthConfig::small(2);
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_ne!(a.corpus, generate(&SynthConfig::small(3)).unwrap().corpus);
        assert_eq!(a.corpus.len(), cfg.posts);
        assert_eq!(a.gold.len(), cfg.gold_posts * cfg.human_annotators);
        for c in [Community::Russian, Community::Ukrainian] {
            let windows = crisis_windows(&a.registry, c).unwrap();
            for inside in [true, false] {
                let posts: Vec<_> = a
                    .corpus
                    .posts()
                    .iter()
                    .filter(|p| {
                        a.communities[&p.channel_id] == c
                            && in_windows(&windows, p.timestamp) == inside
                    })
                    .collect();
                let k = posts
                    .iter()
                    .filter(|p| a.truth[&p.id].any_category())
                    .count();
                let rate = if inside {
                    cfg.rate_in_window
                } else {
                    cfg.rate_out_window
                };
                assert_eq!(k, (rate * posts.len() as f64).round() as usize);
            }
        }
    }
}
