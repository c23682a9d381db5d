//! Store a solved policy as JSON, load it back, and apply it.
//!
//!     cargo run --release --example policy_roundtrip -- [policy.json]

use omt::solver::{self, SearchConfig};
use omt::{ErrorMeasure, PVector, PolicyFile, ProblemSpec, QuadConfig};

fn main() -> omt::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("omt_policy.json").display().to_string());
    let spec = ProblemSpec::any(3, 0.05, ErrorMeasure::Fwer, -1.33);
    let report = solver::solve_mu(&spec, &QuadConfig::default(), &SearchConfig::default())?;
    report.policy().to_file(report.solver_meta()).save(path.as_ref())?;
    println!("saved to {path}");

    let loaded = PolicyFile::load(path.as_ref())?.policy()?;
    assert_eq!(loaded.mu(), report.policy().mu());
    for u in [[0.01, 0.02, 0.03], [0.004, 0.3, 0.9], [0.2, 0.3, 0.4]] {
        let p = PVector::new(u.to_vec())?;
        println!("{u:?}: reject the {} smallest (residuals {:?})", loaded.decide(&p)?, loaded.residuals(&p)?);
    }
    Ok(())
}
