//! FDR-optimal policies. Close to the null the optimum collapses to the
//! all-or-nothing Stouffer test; further out it rejects individual nulls.
//!
//!     cargo run --release --example solve_fdr

use omt::eval::{self, StoufferAllOrNothing};
use omt::solver::{self, SearchConfig};
use omt::{ErrorMeasure, ProblemSpec, QuadConfig};

fn main() -> omt::Result<()> {
    let cfg = QuadConfig::default();
    let stouffer = StoufferAllOrNothing::new(3, 0.05)?;
    for theta in [-0.35, -0.5, -2.0] {
        let spec = ProblemSpec::avg(3, 0.05, ErrorMeasure::Fdr, theta);
        let r = solver::solve_mu(&spec, &cfg, &SearchConfig::default())?;
        let diff = eval::region_disagreement(&r.policy(), &stouffer, &cfg)?;
        println!(
            "theta {theta:>5}: power {:.4}, mu {:?}, FDR {:?}, null measure where it differs from Stouffer {:.2e}",
            r.objective,
            r.mu_star.as_slice(),
            r.constraint_values.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>(),
            diff.value
        );
    }
    Ok(())
}
