//! Cross-check the quadrature behind a solved policy against plain
//! simulation.
//!
//!     cargo run --release --example monte_carlo_check -- [n]

use omt::quad::{self, Scenario, Stat};
use omt::solver::{self, SearchConfig};
use omt::{ErrorMeasure, ProblemSpec, QuadConfig};

fn main() -> omt::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(1_000_000, |s| s.parse().expect("n"));
    let cfg = QuadConfig::default();
    for measure in [ErrorMeasure::Fwer, ErrorMeasure::Fdr] {
        let spec = ProblemSpec::avg(3, 0.05, measure, -1.0);
        let r = solver::solve_mu(&spec, &cfg, &SearchConfig::default())?;
        let policy = r.policy();
        let stat = match measure {
            ErrorMeasure::Fwer => Stat::Fwer,
            ErrorMeasure::Fdr => Stat::Fdp,
        };
        println!("{measure} policy, mu = {:?}", r.mu_star.as_slice());
        for l in 0..3 {
            let s = Scenario::canonical(3, l, -1.0);
            let mc = &quad::mc_expectation(&policy, &s, 0.0, &[stat], n, l as u64)?[0];
            println!("  L = {l}: quadrature {:.5}  simulation {:.5} ± {:.5}", r.constraint_values[l], mc.value, mc.abs_error_est);
        }
        let s = Scenario::canonical(3, 3, -1.0);
        let mc = &quad::mc_expectation(&policy, &s, 0.0, &[Stat::AvgPower], n, 9)?[0];
        println!("  power: quadrature {:.5}  simulation {:.5} ± {:.5}", r.objective, mc.value, mc.abs_error_est);
    }
    Ok(())
}
