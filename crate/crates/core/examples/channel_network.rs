// Channel network: forwards and mentions form a weighted graph, declared
// stances seed label propagation, and centrality is correlated with how
// often a channel posts othering content.

use std::collections::BTreeMap;

use othering::corpus::Stance;
use othering::network::{
    build_graph, centrality_vs_othering, eigenvector_centrality, propagate_labels, ChannelGraph,
    Propagation, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use othering::stats::StatRow;
use othering::synth::{generate, SynthConfig};

pub struct NetworkSummary {
    pub path: Propagation,
    pub p3_eigenvector: BTreeMap<String, f64>,
    pub synthetic: Propagation,
    pub synthetic_accuracy: f64,
    pub correlations: Vec<StatRow>,
}

/// a - b - c - d with `a` seeded pro-Russian and `d` pro-Ukrainian; the
/// heavier a-b edge pulls `b` to Russia and `c` sits on a tie.
pub fn path_fixture() -> (ChannelGraph, BTreeMap<String, Stance>) {
    let mut g = ChannelGraph::new();
    g.add_edge("a", "b", 2);
    g.add_edge("b", "c", 1);
    g.add_edge("c", "d", 1);
    let seeds = BTreeMap::from([
        ("a".to_string(), Stance::ProRussia),
        ("d".to_string(), Stance::ProUkraine),
    ]);
    (g, seeds)
}

pub fn run_example() -> othering::Result<NetworkSummary> {
    let (g, seeds) = path_fixture();
    let path = propagate_labels(&g, &seeds, 10)?;

    let mut p3 = ChannelGraph::new();
    p3.add_edge("x", "y", 1);
    p3.add_edge("y", "z", 1);
    let p3_eigenvector = eigenvector_centrality(&p3, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;

    let s = generate(&SynthConfig::small(4))?;
    let (graph, _) = build_graph(&s.corpus);
    let seeds: BTreeMap<String, Stance> = s
        .corpus
        .channels()
        .values()
        .filter_map(|c| Some((c.id.clone(), c.declared_stance?)))
        .collect();
    let synthetic = propagate_labels(&graph, &seeds, graph.node_count())?;
    let correct = synthetic
        .stances
        .iter()
        .filter(|(id, st)| {
            othering::timeline::Community::of_stance(**st) == Some(s.communities[*id])
        })
        .count();
    let synthetic_accuracy = correct as f64 / synthetic.stances.len() as f64;

    let mut counts: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for p in s.corpus.posts() {
        let e = counts.entry(&p.channel_id).or_default();
        e.0 += f64::from(u8::from(s.truth[&p.id].any_category()));
        e.1 += 1.0;
    }
    let proportions = counts
        .into_iter()
        .map(|(c, (o, n))| (c.to_string(), o / n))
        .collect();
    let correlations = centrality_vs_othering(&graph, &proportions)?;

    Ok(NetworkSummary {
        path,
        p3_eigenvector,
        synthetic,
        synthetic_accuracy,
        correlations,
    })
}

#[allow(dead_code)]
fn main() -> othering::Result<()> {
    let s = run_example()?;
    for (id, st) in &s.path.stances {
        println!("path {id}: {}", st.as_str());
    }
    println!("P3 eigenvector centrality {:?}", s.p3_eigenvector);
    println!(
        "synthetic: {} channels labeled in {} passes, {:.0}% match their community",
        s.synthetic.stances.len(),
        s.synthetic.passes,
        100.0 * s.synthetic_accuracy
    );
    for r in &s.correlations {
        println!("{} = {:?} (p {:?})", r.statistic, r.value, r.p);
    }
    Ok(())
}
