//! Maximin FWER policy for three hypotheses at theta0 = -2, with its
//! verification lattice. Takes several minutes.
//!
//!     cargo run --release --example maximin_k3 -- [out.json]

use omt::baselines::{BaselineKind, BaselinePolicy};
use omt::eval;
use omt::maximin::{self, MaximinSpec};
use omt::solver::SearchConfig;
use omt::{DecisionRule, ErrorMeasure, PVector, ProblemSpec, QuadConfig};

fn main() -> omt::Result<()> {
    let cfg = QuadConfig::default();
    let spec = MaximinSpec::new(ProblemSpec::avg(3, 0.05, ErrorMeasure::Fwer, -2.0))?;
    let report = maximin::maximin(&spec, &cfg, &SearchConfig::default())?;
    let policy = report.policy()?;
    println!("theta_A = {:.3}, mu = {:?}, certified {}", report.theta_a, report.mu, report.certified);

    let worst = report.control_check.iter().max_by(|a, b| a.value.total_cmp(&b.value)).expect("non-empty");
    println!("largest FWER on the lattice: {:.5} at L = {}, thetas {:?}", worst.value, worst.l, worst.thetas);

    let holm = BaselinePolicy::new(BaselineKind::Holm, 3, 0.05)?;
    let stouffer = BaselinePolicy::new(BaselineKind::ClosedStouffer, 3, 0.05)?;
    let rules: [&dyn DecisionRule; 3] = [&policy, &stouffer, &holm];
    for r in rules {
        let p = eval::power(r, &[-2.0; 3], &cfg)?;
        println!("{:>16}: avg {:.4}, any {:.4}", r.name(), p.avg_power, p.any_power);
    }

    // Subgroup-style triples where only the maximin policy finds anything.
    for u in [[0.020, 0.026, 0.500], [0.033, 0.038, 0.323], [0.055, 0.055, 0.201], [0.057, 0.057, 0.500]] {
        let p = PVector::new(u.to_vec())?;
        let counts: Vec<usize> = rules.iter().map(|r| r.decide_full(&p).count()).collect();
        println!("{u:?}: rejections {counts:?}");
    }

    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, report.to_json()?)?;
        println!("report written to {path}");
    }
    Ok(())
}
