//! Run several procedures over a table of p-values and summarize the
//! discoveries. Reads a CSV path if given, otherwise a small built-in table.
//!
//!     cargo run --release --example apply_dataset -- [data.csv]

use omt::baselines::{BaselineKind, BaselinePolicy};
use omt::cli::{self, Procedure};
use omt::solver::{self, SearchConfig};
use omt::{ErrorMeasure, ProblemSpec, QuadConfig};

const BUILT_IN: &str = "\
id,p1,p2,p3
trial-a,0.020,0.026,0.500
trial-b,0.033,0.038,0.323
trial-c,0.001,0.400,0.800
trial-d,0.010,0.012,0.015
trial-e,0.300,0.610,0.920
trial-f,0.04,oops,0.1
";

fn main() -> omt::Result<()> {
    let data = match std::env::args().nth(1) {
        Some(path) => cli::read_dataset(std::fs::File::open(path)?)?,
        None => cli::read_dataset(BUILT_IN.as_bytes())?,
    };
    for s in &data.skipped {
        eprintln!("skipped line {}: {}", s.line, s.reason);
    }

    let spec = ProblemSpec::avg(data.k, 0.05, ErrorMeasure::Fwer, -2.0);
    let omt = solver::solve_mu(&spec, &QuadConfig::default(), &SearchConfig::default())?.policy();
    let procs = vec![
        Procedure { name: "omt".into(), rule: Box::new(omt) },
        Procedure { name: "holm".into(), rule: Box::new(BaselinePolicy::new(BaselineKind::Holm, data.k, 0.05)?) },
        Procedure { name: "bh".into(), rule: Box::new(BaselinePolicy::new(BaselineKind::BH, data.k, 0.05)?) },
    ];
    let report = cli::apply(&data, &procs)?;
    report.write_csv(std::io::stdout())?;
    for s in &report.summary {
        println!("{}: {:.3} discoveries per row, {:.0}% of rows with any", s.procedure, s.mean_discoveries, 100.0 * s.fraction_any);
    }
    Ok(())
}
