// Daily othering proportions with a centered moving average, and the
// comparison of posts inside and outside the week after each key event.

use othering::attention::normalized_views;
use othering::network::build_graph;
use othering::synth::{generate, SynthConfig};
use othering::timeline::{
    crisis_comparison, crisis_windows, proportions_over_time, CategorySeries, Community,
    CrisisReport,
};

pub struct TrendSummary {
    pub series: CategorySeries,
    pub crisis: CrisisReport,
    pub russian_windows: usize,
    pub planted: (f64, f64),
}

pub fn run_example() -> othering::Result<TrendSummary> {
    let cfg = SynthConfig::small(5);
    let s = generate(&cfg)?;
    let series = proportions_over_time(&s.corpus, &s.truth, 7)?;
    let (graph, _) = build_graph(&s.corpus);
    let crisis = crisis_comparison(
        &s.corpus,
        &s.truth,
        &s.registry,
        &s.communities,
        &normalized_views(&s.corpus),
        Some(&graph),
    )?;
    Ok(TrendSummary {
        series,
        crisis,
        russian_windows: crisis_windows(&s.registry, Community::Russian)?.len(),
        planted: (cfg.rate_in_window, cfg.rate_out_window),
    })
}

#[allow(dead_code)]
fn main() -> othering::Result<()> {
    let s = run_example()?;
    let mut out = std::io::stdout().lock();
    println!("first days of the smoothed series:");
    let mut csv = Vec::new();
    s.series
        .write_csv(othering::timeline::SeriesKind::Smoothed, &mut csv)?;
    for line in String::from_utf8_lossy(&csv).lines().take(6) {
        println!("  {line}");
    }
    println!(
        "{} merged crisis windows for the Russian community",
        s.russian_windows
    );
    println!(
        "planted othering rates: {} inside, {} outside",
        s.planted.0, s.planted.1
    );
    s.crisis.write_proportions_csv(&mut out)?;
    Ok(())
}
