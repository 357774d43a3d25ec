// The hypothesis tests used by the analyses, on small tables whose values
// are easy to check by hand.

use othering::stats::{
    chi_squared, group_mean_with_se, log_odds_ratio, mann_whitney_u, spearman, two_proportion_z,
    ContingencyTable2x2,
};

pub struct StatisticsSummary {
    pub chi2: f64,
    pub chi2_p: f64,
    pub log_odds: f64,
    pub z: f64,
    pub mwu_p: f64,
    pub rho: f64,
    pub mean_se: (f64, Option<f64>),
}

pub fn run_example() -> othering::Result<StatisticsSummary> {
    let chi = chi_squared(&ContingencyTable2x2::new(20, 30, 30, 20), false)?;
    let lor = log_odds_ratio(&ContingencyTable2x2::new(30, 70, 10, 90));
    let z = two_proportion_z(30, 100, 20, 100)?;
    let mwu = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0])?;
    let rho = spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0])?;
    let ms = group_mean_with_se(&[0.0, 2.0])?;
    Ok(StatisticsSummary {
        chi2: chi.statistic,
        chi2_p: chi.p,
        log_odds: lor.lor,
        z: z.z,
        mwu_p: mwu.p,
        rho: rho.rho,
        mean_se: (ms.mean, ms.se),
    })
}

#[allow(dead_code)]
fn main() -> othering::Result<()> {
    let s = run_example()?;
    println!(
        "chi-squared [[20,30],[30,20]]   {:.4} (p {:.4})",
        s.chi2, s.chi2_p
    );
    println!("log odds (30,70,10,90)          {:.4}", s.log_odds);
    println!("two-proportion z 30/100 20/100  {:.4}", s.z);
    println!("mann-whitney exact p            {:.4}", s.mwu_p);
    println!("spearman rho                    {:.4}", s.rho);
    println!(
        "mean, se of [0, 2]              {} {:?}",
        s.mean_se.0, s.mean_se.1
    );
    Ok(())
}
