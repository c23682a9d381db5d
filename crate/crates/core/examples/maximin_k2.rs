//! Maximin policy for two hypotheses: the design alternative is chosen so that
//! power at the least favourable configuration is as large as possible while
//! error stays controlled for every alternative, not just one.
//!
//!     cargo run --release --example maximin_k2 -- [fwer|fdr] [theta0]

use omt::baselines::{BaselineKind, BaselinePolicy};
use omt::eval;
use omt::maximin::{self, MaximinSpec};
use omt::solver::SearchConfig;
use omt::{ErrorMeasure, ProblemSpec, QuadConfig};

fn main() -> omt::Result<()> {
    let mut args = std::env::args().skip(1);
    let measure = match args.next().as_deref() {
        Some("fdr") => ErrorMeasure::Fdr,
        _ => ErrorMeasure::Fwer,
    };
    let theta0: f64 = args.next().map_or(-1.0, |s| s.parse().expect("theta0"));
    let cfg = QuadConfig::default();

    let spec = MaximinSpec::new(ProblemSpec::avg(2, 0.05, measure, theta0))?;
    let report = maximin::maximin(&spec, &cfg, &SearchConfig::default())?;

    println!("power of theta-specific policies at theta0 = {theta0}:");
    for p in &report.power_curve {
        println!("  theta {:>8.4}  power {:.4}  mu {:?}", p.theta, p.power, p.mu);
    }
    println!("theta_A = {:.3}, minimal power {:.4}, certified {}", report.theta_a, report.min_power, report.certified);

    let classical = match measure {
        ErrorMeasure::Fwer => BaselineKind::Holm,
        ErrorMeasure::Fdr => BaselineKind::MABH,
    };
    let b = eval::power(&BaselinePolicy::new(classical, 2, 0.05)?, &[theta0; 2], &cfg)?;
    println!("{classical} at theta0: {:.4}", b.avg_power);
    Ok(())
}
