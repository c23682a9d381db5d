//! Rejection regions on the plane `u1 = const`, written as CSV for plotting.
//!
//!     cargo run --release --example region_slice -- [u1] [out_dir]

use std::fs::File;
use std::path::PathBuf;

use omt::baselines::{BaselineKind, BaselinePolicy};
use omt::eval;
use omt::solver::{self, SearchConfig};
use omt::{DecisionRule, ErrorMeasure, ProblemSpec, QuadConfig};

fn main() -> omt::Result<()> {
    let mut args = std::env::args().skip(1);
    let u1: f64 = args.next().map_or(0.02, |s| s.parse().expect("u1"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));

    let spec = ProblemSpec::avg(3, 0.05, ErrorMeasure::Fwer, -1.33);
    let omt = solver::solve_mu(&spec, &QuadConfig::default(), &SearchConfig::default())?.policy();
    let holm = BaselinePolicy::new(BaselineKind::Holm, 3, 0.05)?;
    let rules: [(&str, &dyn DecisionRule); 2] = [("omt", &omt), ("holm", &holm)];

    for (name, rule) in rules {
        let slice = eval::region_slice(rule, u1, 256)?;
        let path = out.join(format!("slice_{name}_{u1}.csv"));
        slice.write_csv(File::create(&path)?)?;
        let rejecting = slice.counts.iter().filter(|&&c| c > 0).count();
        println!("{name}: {rejecting} of {} cells reject something -> {}", slice.counts.len(), path.display());
    }
    Ok(())
}
