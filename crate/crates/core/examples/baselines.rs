//! The classical procedures on a few p-vectors, and their power.
//!
//!     cargo run --release --example baselines

use omt::baselines::{BaselineKind, BaselinePolicy};
use omt::eval;
use omt::{DecisionRule, PVector, QuadConfig};

fn main() -> omt::Result<()> {
    let rules: Vec<BaselinePolicy> =
        BaselineKind::ALL.iter().map(|&k| BaselinePolicy::new(k, 3, 0.05)).collect::<omt::Result<_>>()?;

    let vectors = [[0.01, 0.02, 0.2], [0.02, 0.03, 0.04], [0.001, 0.5, 0.5], [0.02, 0.026, 0.9]];
    print!("{:<22}", "p");
    for r in &rules {
        print!("{:>16}", r.name());
    }
    println!();
    for u in vectors {
        print!("{:<22}", format!("{u:?}"));
        let p = PVector::new(u.to_vec())?;
        for r in &rules {
            print!("{:>16}", format!("{:?}", r.decide_full(&p).indices()));
        }
        println!();
    }

    let cfg = QuadConfig::default();
    println!("\naverage power with every null false");
    for theta in [-0.5, -1.0, -2.0, -3.0] {
        print!("theta {theta:>5}:");
        for r in &rules {
            print!("  {} {:.4}", r.name(), eval::power(r, &[theta; 3], &cfg)?.avg_power);
        }
        println!();
    }
    Ok(())
}
