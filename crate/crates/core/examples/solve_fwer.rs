//! Solve the most powerful FWER-controlling policy for three hypotheses and
//! compare it with Holm at the design alternative.
//!
//!     cargo run --release --example solve_fwer -- [theta]

use omt::baselines::{BaselineKind, BaselinePolicy};
use omt::eval;
use omt::solver::{self, SearchConfig};
use omt::{ErrorMeasure, ProblemSpec, QuadConfig};

fn main() -> omt::Result<()> {
    let theta: f64 = std::env::args().nth(1).map_or(-2.0, |s| s.parse().expect("theta"));
    let cfg = QuadConfig::default();
    let spec = ProblemSpec::avg(3, 0.05, ErrorMeasure::Fwer, theta);
    let report = solver::solve_mu(&spec, &cfg, &SearchConfig::default())?;

    println!("mu* = {:?}  (active {:?}, {})", report.mu_star.as_slice(), report.active_set, report.method);
    for (l, c) in report.constraint_values.iter().enumerate() {
        println!("  FWER with {l} false nulls: {c:.5}");
    }
    println!("average power {:.4}, duality gap {:.1e}", report.objective, report.duality_gap);

    let holm = BaselinePolicy::new(BaselineKind::Holm, 3, 0.05)?;
    let h = eval::power(&holm, &[theta; 3], &cfg)?;
    let o = eval::power(&report.policy(), &[theta; 3], &cfg)?;
    println!("{:>8} {:>8} {:>8}", "", "avg", "any");
    println!("{:>8} {:>8.4} {:>8.4}", "holm", h.avg_power, h.any_power);
    println!("{:>8} {:>8.4} {:>8.4}", "omt", o.avg_power, o.any_power);
    Ok(())
}
