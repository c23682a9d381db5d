//! How a policy solved under independence behaves when the test statistics
//! are equicorrelated.
//!
//!     cargo run --release --example misspecification

use omt::baselines::{BaselineKind, BaselinePolicy};
use omt::eval;
use omt::solver::{self, SearchConfig};
use omt::{DecisionRule, ErrorMeasure, ProblemSpec, QuadConfig};

fn main() -> omt::Result<()> {
    let spec = ProblemSpec::avg(3, 0.05, ErrorMeasure::Fwer, -1.33);
    let omt = solver::solve_mu(&spec, &QuadConfig::default(), &SearchConfig::default())?.policy();
    let holm = BaselinePolicy::new(BaselineKind::Holm, 3, 0.05)?;

    let rhos = [-0.3, 0.0, 0.3, 0.5, 0.8];
    let shifts = vec![vec![0.0; 3], vec![-1.33, 0.0, 0.0], vec![-1.33; 3], vec![-3.0, -0.5, 0.0]];
    let rules: [&dyn DecisionRule; 2] = [&omt, &holm];
    for rule in rules {
        println!("{}", rule.name());
        println!("{:>6} {:<22} {:>14} {:>14}", "rho", "theta", "FWER", "avg power");
        for row in eval::misspec_sweep(rule, &rhos, &shifts, 200_000, 7)? {
            println!(
                "{:>6} {:<22} {:>8.4}±{:.4} {:>8.4}±{:.4}",
                row.rho,
                format!("{:?}", row.thetas),
                row.fwer,
                row.fwer_se,
                row.avg_power,
                row.avg_power_se
            );
        }
    }
    Ok(())
}
