//! Moral devices crossed with othering categories.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::corpus::{Corpus, MoralVector};
use crate::error::{Error, Result};
use crate::labels::{Key, LabelVector};
use crate::stats::{
    chi_squared, log_odds_ratio, two_proportion_z, ChiSquared, ContingencyTable2x2, LogOdds,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Purity,
    Authority,
    Equality,
    Loyalty,
    Care,
    Proportionality,
}

impl Device {
    pub const ALL: [Device; 6] = [
        Device::Purity,
        Device::Authority,
        Device::Equality,
        Device::Loyalty,
        Device::Care,
        Device::Proportionality,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Device::Purity => "purity",
            Device::Authority => "authority",
            Device::Equality => "equality",
            Device::Loyalty => "loyalty",
            Device::Care => "care",
            Device::Proportionality => "proportionality",
        }
    }

    pub fn of(self, m: &MoralVector) -> bool {
        match self {
            Device::Purity => m.purity,
            Device::Authority => m.authority,
            Device::Equality => m.equality,
            Device::Loyalty => m.loyalty,
            Device::Care => m.care,
            Device::Proportionality => m.proportionality,
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A 2x2 table with its smoothed log odds ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub table: ContingencyTable2x2,
    pub log_odds: LogOdds,
}

impl Cell {
    fn new(table: ContingencyTable2x2) -> Self {
        Cell {
            table,
            log_odds: log_odds_ratio(&table),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoralOtheringGrid {
    /// Rows: category present/absent. Columns: device present/absent.
    pub cells: BTreeMap<(Device, Key), Cell>,
    /// Rows: any othering present/absent. Columns: device present/absent.
    pub device_marginals: BTreeMap<Device, Cell>,
    /// Rows: category present/absent. Columns: any moral device present/absent.
    pub category_marginals: BTreeMap<Key, Cell>,
    /// Rows: any othering present/absent. Columns: any moral device present/absent.
    pub headline: Cell,
    pub posts: usize,
}

/// Posts carrying both othering labels and moral tags.
pub fn paired_posts(
    corpus: &Corpus,
    labels: &BTreeMap<String, LabelVector>,
) -> Vec<(LabelVector, MoralVector)> {
    corpus
        .posts()
        .iter()
        .filter_map(|p| Some((*labels.get(&p.id)?, p.moral?)))
        .collect()
}

pub fn moral_othering_grid(posts: &[(LabelVector, MoralVector)]) -> Result<MoralOtheringGrid> {
    if posts.is_empty() {
        return Err(Error::Empty("posts with labels and moral tags"));
    }
    let mut cells: BTreeMap<(Device, Key), ContingencyTable2x2> = BTreeMap::new();
    let mut device_marginals: BTreeMap<Device, ContingencyTable2x2> = BTreeMap::new();
    let mut category_marginals: BTreeMap<Key, ContingencyTable2x2> = BTreeMap::new();
    let mut headline = ContingencyTable2x2::default();
    for (l, m) in posts {
        let othering = l.any_category();
        headline.add(othering, m.any());
        for d in Device::ALL {
            device_marginals
                .entry(d)
                .or_default()
                .add(othering, d.of(m));
            for k in Key::CATEGORIES {
                cells.entry((d, k)).or_default().add(l.get(k), d.of(m));
            }
        }
        for k in Key::CATEGORIES {
            category_marginals
                .entry(k)
                .or_default()
                .add(l.get(k), m.any());
        }
    }
    Ok(MoralOtheringGrid {
        cells: cells.into_iter().map(|(k, t)| (k, Cell::new(t))).collect(),
        device_marginals: device_marginals
            .into_iter()
            .map(|(k, t)| (k, Cell::new(t)))
            .collect(),
        category_marginals: category_marginals
            .into_iter()
            .map(|(k, t)| (k, Cell::new(t)))
            .collect(),
        headline: Cell::new(headline),
        posts: posts.len(),
    })
}

impl MoralOtheringGrid {
    /// Chi-squared test of any othering against any moral device.
    pub fn headline_test(&self) -> Result<ChiSquared> {
        chi_squared(&self.headline.table, false)
    }

    /// Long form: device, category, a, b, c, d, lor, se, z, p. Marginal rows
    /// use `any_othering` and `any_moral` as the category and device.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "device", "category", "a", "b", "c", "d", "lor", "se", "z", "p",
        ])?;
        let mut row = |device: &str, category: &str, cell: &Cell| -> Result<()> {
            let t = cell.table;
            let (z, p) = cell.log_odds.wald();
            w.write_record([
                device.to_string(),
                category.to_string(),
                t.a.to_string(),
                t.b.to_string(),
                t.c.to_string(),
                t.d.to_string(),
                format!("{:.6}", cell.log_odds.lor),
                format!("{:.6}", cell.log_odds.se),
                format!("{z:.6}"),
                format!("{p:.6e}"),
            ])?;
            Ok(())
        };
        for ((d, k), cell) in &self.cells {
            row(d.as_str(), k.name(), cell)?;
        }
        for (d, cell) in &self.device_marginals {
            row(d.as_str(), "any_othering", cell)?;
        }
        for (k, cell) in &self.category_marginals {
            row("any_moral", k.name(), cell)?;
        }
        row("any_moral", "any_othering", &self.headline)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastCell {
    pub device: Device,
    pub category: Key,
    /// `P(device | category)` in each group.
    pub rate_a: Option<f64>,
    pub rate_b: Option<f64>,
    pub z: Option<f64>,
    pub p: Option<f64>,
    pub flag: Option<String>,
}

/// Two-proportion z-test of `P(device | category present)` between two
/// groups, per cell.
pub fn group_contrast(a: &MoralOtheringGrid, b: &MoralOtheringGrid) -> Result<Vec<ContrastCell>> {
    if a.cells.len() != b.cells.len() || a.cells.keys().ne(b.cells.keys()) {
        return Err(Error::invalid(
            "grids cover different devices or categories",
        ));
    }
    let rate = |x: u64, n: u64| (n > 0).then(|| x as f64 / n as f64);
    let mut out = Vec::new();
    for ((d, k), ca) in &a.cells {
        let cb = &b.cells[&(*d, *k)];
        let (xa, na) = (ca.table.a, ca.table.a + ca.table.b);
        let (xb, nb) = (cb.table.a, cb.table.a + cb.table.b);
        let (z, p, flag) = if na == 0 || nb == 0 {
            (None, None, Some("category absent in a group".to_string()))
        } else {
            match two_proportion_z(xa, na, xb, nb) {
                Ok(t) => (Some(t.z), Some(t.p), None),
                Err(Error::DegenerateMarginals) => {
                    (None, None, Some("degenerate pooled proportion".to_string()))
                }
                Err(e) => return Err(e),
            }
        };
        out.push(ContrastCell {
            device: *d,
            category: *k,
            rate_a: rate(xa, na),
            rate_b: rate(xb, nb),
            z,
            p,
            flag,
        });
    }
    Ok(out)
}

/// Columns: device, category, rate_a, rate_b, z, p, flags.
pub fn write_contrast_csv(cells: &[ContrastCell], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["device", "category", "rate_a", "rate_b", "z", "p", "flags"])?;
    let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for c in cells {
        w.write_record([
            c.device.as_str().to_string(),
            c.category.name().to_string(),
            f(c.rate_a),
            f(c.rate_b),
            f(c.z),
            c.p.map(|x| format!("{x:.6e}")).unwrap_or_default(),
            c.flag.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn moral(purity: bool, care: bool) -> MoralVector {
        MoralVector {
            purity,
            care,
            ..MoralVector::default()
        }
    }

    fn vil(flag: bool) -> LabelVector {
        LabelVector::from_categories([false, false, flag, false])
    }

    #[test]
    fn co_occurrence_gives_positive_lor() {
        let posts: Vec<_> = (0..100)
            .map(|i| (vil(i % 2 == 0), moral(i % 2 == 0, false)))
            .collect();
        let g = moral_othering_grid(&posts).unwrap();
        let c = g.cells[&(Device::Purity, Key::Vilification)];
        assert_eq!(c.table, ContingencyTable2x2::new(50, 0, 0, 50));
        assert!(c.log_odds.lor > 3.0);
        assert!(c.log_odds.zero_cells);
    }

    #[test]
    fn independence_gives_small_lor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let posts: Vec<_> = (0..400)
            .map(|_| {
                (
                    vil(rng.random_bool(0.3)),
                    moral(rng.random_bool(0.4), false),
                )
            })
            .collect();
        let g = moral_othering_grid(&posts).unwrap();
        let c = g.cells[&(Device::Purity, Key::Vilification)].log_odds;
        assert!(c.lor.abs() < 2.0 * c.se);
    }

    #[test]
    fn headline_matches_direct_cross_tab() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let posts: Vec<_> = (0..300)
            .map(|_| {
                let l = LabelVector::from_categories([
                    rng.random_bool(0.2),
                    rng.random_bool(0.1),
                    rng.random_bool(0.3),
                    false,
                ]);
                (l, moral(rng.random_bool(0.3), rng.random_bool(0.2)))
            })
            .collect();
        let g = moral_othering_grid(&posts).unwrap();
        let mut direct = ContingencyTable2x2::default();
        for (l, m) in &posts {
            direct.add(l.any_category(), m.any());
        }
        assert_eq!(g.headline.table, direct);
        assert_eq!(
            g.headline_test().unwrap(),
            chi_squared(&direct, false).unwrap()
        );
        // row sums agree across devices
        for k in Key::CATEGORIES {
            let sums: Vec<u64> = Device::ALL
                .iter()
                .map(|d| g.cells[&(*d, k)].table.a + g.cells[&(*d, k)].table.b)
                .collect();
            assert!(sums.windows(2).all(|w| w[0] == w[1]));
        }
        let c = g.cells[&(Device::Care, Key::Vilification)];
        let swapped = log_odds_ratio(&c.table.swap_columns());
        assert_eq!(swapped.lor, -c.log_odds.lor);
    }

    #[test]
    fn contrast_detects_planted_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut group = |purity_rate: f64| {
            let posts: Vec<_> = (0..400)
                .map(|i| {
                    let v = i % 2 == 0;
                    let p = if v { purity_rate } else { 0.2 };
                    (vil(v), moral(rng.random_bool(p), rng.random_bool(0.2)))
                })
                .collect();
            moral_othering_grid(&posts).unwrap()
        };
        let a = group(0.4);
        let b = group(0.2);
        let cells = group_contrast(&a, &b).unwrap();
        let planted = cells
            .iter()
            .find(|c| c.device == Device::Purity && c.category == Key::Vilification)
            .unwrap();
        assert!(planted.p.unwrap() < 0.05);
        assert!(planted.z.unwrap() > 0.0);
        let same = group_contrast(&a, &a).unwrap();
        assert!(same.iter().all(|c| c.z.is_none_or(|z| z == 0.0)));
        // dehumanization never occurs
        assert!(same
            .iter()
            .filter(|c| c.category == Key::Dehumanization)
            .all(|c| c.flag.is_some()));
    }
}
