//! The evidence that a solved policy is optimal: weak-duality gap,
//! complementary slackness, an integrality audit of the pointwise LP, and
//! agreement across randomized starts.
//!
//!     cargo run --release --example optimality_certificate

use omt::solver::{self, integrality_audit, SearchConfig};
use omt::{ErrorMeasure, ProblemSpec, QuadConfig};

fn main() -> omt::Result<()> {
    let cfg = QuadConfig::default();
    let spec = ProblemSpec::avg(3, 0.05, ErrorMeasure::Fdr, -2.0);
    let r = solver::solve_mu(&spec, &cfg, &SearchConfig::default())?;
    let c = &r.certificate;
    println!("primal {:.6}, dual {:.6}, gap {:.1e} (grid {})", c.primal_objective, c.dual_objective, c.gap, c.grid_n);
    println!("slackness residuals {:?}", r.residuals);

    let audit = integrality_audit(&r.policy(), 1_000_000, 1);
    println!("integrality audit: {} of {} points with a fractional optimum", audit.flagged, audit.n_samples);

    for seed in 1..=5 {
        let again = solver::solve_mu(&spec, &cfg, &SearchConfig::default().with_seed(seed))?;
        println!("start {seed}: mu = {:?}", again.mu_star.as_slice());
    }
    Ok(())
}
