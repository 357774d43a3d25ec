//! Channel reference network, stance propagation and centrality.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{Corpus, Stance};
use crate::error::{Error, Result};
use crate::stats::{spearman, StatRow};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 1000;

/// Directed weighted graph of channels referencing each other.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelGraph {
    nodes: BTreeSet<String>,
    edges: BTreeMap<(String, String), u64>,
    stance: BTreeMap<String, Stance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct BuildReport {
    pub self_loops_dropped: u64,
    /// Referenced channels missing from the channel table.
    pub unknown_targets: Vec<String>,
}

/// Undirected projection indexed by position in the sorted node list.
struct Undirected {
    ids: Vec<String>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl ChannelGraph {
    pub fn new() -> Self {
        ChannelGraph::default()
    }

    pub fn add_node(&mut self, id: impl Into<String>) {
        self.nodes.insert(id.into());
    }

    /// Adds `weight` to the edge `src -> dst`, creating both nodes. Self-loops
    /// and zero weights are ignored; returns whether the edge was counted.
    pub fn add_edge(&mut self, src: &str, dst: &str, weight: u64) -> bool {
        if src == dst || weight == 0 {
            return false;
        }
        self.nodes.insert(src.to_string());
        self.nodes.insert(dst.to_string());
        *self
            .edges
            .entry((src.to_string(), dst.to_string()))
            .or_insert(0) += weight;
        true
    }

    pub fn set_stance(&mut self, id: &str, stance: Stance) {
        self.nodes.insert(id.to_string());
        self.stance.insert(id.to_string(), stance);
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(String::as_str)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.edges
            .iter()
            .map(|((s, d), w)| (s.as_str(), d.as_str(), *w))
    }

    pub fn edge_weight(&self, src: &str, dst: &str) -> u64 {
        self.edges
            .get(&(src.to_string(), dst.to_string()))
            .copied()
            .unwrap_or(0)
    }

    /// Declared stance; `None` means unlabeled.
    pub fn stance(&self, id: &str) -> Option<Stance> {
        self.stance.get(id).copied()
    }

    fn undirected(&self) -> Undirected {
        let ids: Vec<String> = self.nodes.iter().cloned().collect();
        let index: BTreeMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut merged: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); ids.len()];
        for ((s, d), w) in &self.edges {
            let (a, b) = (index[s.as_str()], index[d.as_str()]);
            *merged[a].entry(b).or_insert(0.0) += *w as f64;
            *merged[b].entry(a).or_insert(0.0) += *w as f64;
        }
        Undirected {
            ids,
            adj: merged
                .into_iter()
                .map(|m| m.into_iter().collect())
                .collect(),
        }
    }

    /// Columns: src, dst, weight.
    pub fn write_edges_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["src", "dst", "weight"])?;
        for (s, d, weight) in self.edges() {
            w.write_record([s, d, &weight.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One node per channel (and per referenced channel id), one directed edge
/// per referencing pair weighted by the number of references.
pub fn build_graph(corpus: &Corpus) -> (ChannelGraph, BuildReport) {
    let mut g = ChannelGraph::new();
    let mut report = BuildReport::default();
    for (id, ch) in corpus.channels() {
        g.add_node(id.clone());
        if let Some(s) = ch.declared_stance {
            g.set_stance(id, s);
        }
    }
    let mut unknown = BTreeSet::new();
    for post in corpus.posts() {
        for r in &post.refs {
            if !corpus.channels().contains_key(&r.target) {
                unknown.insert(r.target.clone());
            }
            if r.target == post.channel_id {
                report.self_loops_dropped += 1;
                continue;
            }
            g.add_edge(&post.channel_id, &r.target, 1);
        }
    }
    for id in &unknown {
        g.add_node(id.clone());
    }
    report.unknown_targets = unknown.into_iter().collect();
    (g, report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub stances: BTreeMap<String, Stance>,
    /// Full passes run, including the final pass that changed nothing.
    pub passes: usize,
    pub converged: bool,
    /// Nodes that ended unlabeled and were assigned `Other`.
    pub defaulted: Vec<String>,
}

impl Propagation {
    /// Columns: channel, stance, source (seed, propagated or default).
    pub fn write_csv(&self, seeds: &BTreeMap<String, Stance>, out: impl Write) -> Result<()> {
        let defaulted: BTreeSet<&str> = self.defaulted.iter().map(String::as_str).collect();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["channel", "stance", "source"])?;
        for (id, s) in &self.stances {
            let source = if seeds.contains_key(id) {
                "seed"
            } else if defaulted.contains(id.as_str()) {
                "default"
            } else {
                "propagated"
            };
            w.write_record([id.as_str(), s.as_str(), source])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Asynchronous label propagation on the undirected projection.
///
/// Seeds never change. Every other node, visited in ascending id order,
/// takes the stance with the largest summed edge weight among its labeled
/// neighbors; a tie or no labeled neighbor leaves it as it is. Nodes still
/// unlabeled at the end become [`Stance::Other`].
pub fn propagate_labels(
    g: &ChannelGraph,
    seeds: &BTreeMap<String, Stance>,
    max_iters: usize,
) -> Result<Propagation> {
    if seeds.is_empty() {
        return Err(Error::invalid("label propagation needs at least one seed"));
    }
    if let Some(missing) = seeds.keys().find(|k| !g.nodes.contains(*k)) {
        return Err(Error::invalid(format!(
            "seed {missing} is not a channel in the graph"
        )));
    }
    let u = g.undirected();
    let mut labels: Vec<Option<Stance>> = u.ids.iter().map(|id| seeds.get(id).copied()).collect();
    let frozen: Vec<bool> = labels.iter().map(Option::is_some).collect();
    let mut passes = 0;
    let mut converged = false;
    while passes < max_iters {
        passes += 1;
        let mut changed = false;
        for i in 0..u.ids.len() {
            if frozen[i] {
                continue;
            }
            let mut votes: BTreeMap<Stance, f64> = BTreeMap::new();
            for &(j, w) in &u.adj[i] {
                if let Some(s) = labels[j] {
                    *votes.entry(s).or_insert(0.0) += w;
                }
            }
            let Some(best) = votes.values().copied().reduce(f64::max) else {
                continue;
            };
            let mut winners = votes.iter().filter(|(_, &v)| v == best);
            let (first, _) = winners.next().expect("nonempty votes");
            if winners.next().is_some() {
                continue;
            }
            if labels[i] != Some(*first) {
                labels[i] = Some(*first);
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    let mut defaulted = Vec::new();
    let stances = u
        .ids
        .iter()
        .zip(labels)
        .map(|(id, s)| {
            let s = s.unwrap_or_else(|| {
                defaulted.push(id.clone());
                Stance::Other
            });
            (id.clone(), s)
        })
        .collect();
    Ok(Propagation {
        stances,
        passes,
        converged,
        defaulted,
    })
}

/// Weighted degree (strength) on the undirected projection.
pub fn degree_centrality(g: &ChannelGraph) -> BTreeMap<String, f64> {
    let u = g.undirected();
    u.ids
        .into_iter()
        .zip(u.adj)
        .map(|(id, nbrs)| (id, nbrs.iter().map(|(_, w)| w).sum()))
        .collect()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn mul(adj: &[Vec<(usize, f64)>], v: &[f64]) -> Vec<f64> {
    adj.iter()
        .map(|nbrs| nbrs.iter().map(|&(j, w)| w * v[j]).sum())
        .collect()
}

/// Leading eigenvector of the undirected weighted adjacency, L2-normalized.
///
/// Power iteration runs on `A / s + I` (with `s` the largest strength), which
/// has the same leading eigenvector as `A` but no eigenvalue of equal
/// magnitude on bipartite graphs. Iteration stops once successive iterates
/// differ by less than `tol` and `||Av - lambda v|| < 10 tol`.
pub fn eigenvector_centrality(
    g: &ChannelGraph,
    tol: f64,
    max_iters: usize,
) -> Result<BTreeMap<String, f64>> {
    if g.nodes.is_empty() {
        return Err(Error::Empty("graph"));
    }
    let u = g.undirected();
    let n = u.ids.len();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let scale = u
        .adj
        .iter()
        .map(|nbrs| nbrs.iter().map(|(_, w)| w).sum::<f64>())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(u.ids.into_iter().zip(v).collect());
    }
    for _ in 0..max_iters {
        let av = mul(&u.adj, &v);
        let mut next: Vec<f64> = av.iter().zip(&v).map(|(a, x)| a / scale + x).collect();
        let norm = l2(&next);
        next.iter_mut().for_each(|x| *x /= norm);
        let step = l2(&next.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        v = next;
        if step < tol {
            let av = mul(&u.adj, &v);
            let lambda: f64 = av.iter().zip(&v).map(|(a, b)| a * b).sum();
            let residual = l2(&av
                .iter()
                .zip(&v)
                .map(|(a, b)| a - lambda * b)
                .collect::<Vec<_>>());
            if residual < 10.0 * tol {
                return Ok(u.ids.into_iter().zip(v).collect());
            }
        }
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        last: v,
    })
}

/// Spearman correlation of each centrality with the per-channel othering
/// proportion, over channels having both values.
pub fn centrality_vs_othering(
    g: &ChannelGraph,
    proportions: &BTreeMap<String, f64>,
) -> Result<Vec<StatRow>> {
    let degree = degree_centrality(g);
    let eigen = eigenvector_centrality(g, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    let mut rows = Vec::new();
    for (name, centrality) in [("degree", &degree), ("eigenvector", &eigen)] {
        let (x, y): (Vec<f64>, Vec<f64>) = centrality
            .iter()
            .filter_map(|(id, c)| proportions.get(id).map(|p| (*c, *p)))
            .unzip();
        if x.len() < 3 {
            return Err(Error::invalid(format!(
                "centrality correlation needs at least 3 channels with othering proportions, got {}",
                x.len()
            )));
        }
        let statistic = format!("spearman_{name}_vs_othering");
        let row = match spearman(&x, &y) {
            Ok(c) => StatRow::new(statistic, Some(c.rho), Some(c.p)).method("spearman"),
            Err(Error::DegenerateMarginals) => StatRow::new(statistic, None, None)
                .method("spearman")
                .flag("zero_variance"),
            Err(e) => return Err(e),
        };
        rows.push(row.flag(format!("n={}", x.len())));
    }
    Ok(rows)
}

/// Up to `per_group` randomly chosen channels of each stance for manual
/// review, sorted within each group.
pub fn audit_sample(
    stances: &BTreeMap<String, Stance>,
    per_group: usize,
    seed: u64,
) -> BTreeMap<Stance, Vec<String>> {
    let mut groups: BTreeMap<Stance, Vec<String>> = BTreeMap::new();
    for (id, s) in stances {
        groups.entry(*s).or_default().push(id.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ids in groups.values_mut() {
        ids.shuffle(&mut rng);
        ids.truncate(per_group);
        ids.sort();
    }
    groups
}
