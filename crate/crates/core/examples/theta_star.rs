//! Where the all-or-nothing Stouffer test stops controlling FDR.
//!
//!     cargo run --release --example theta_star -- [k] [alpha]

use omt::eval::{self, StoufferAllOrNothing};
use omt::{Config, ErrorMeasure, QuadConfig};

fn main() -> omt::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().map_or(3, |s| s.parse().expect("k"));
    let alpha: f64 = args.next().map_or(0.05, |s| s.parse().expect("alpha"));

    let ts = eval::theta_star(k, alpha)?;
    println!("theta* = {:.4}, binding at L = {}", ts.theta, ts.binding_l);
    for (l, b) in ts.bounds.iter().enumerate() {
        println!("  L = {}: FDR <= alpha for theta >= {b:.4}", l + 1);
    }

    // Closed form against direct integration of the rule.
    let rule = StoufferAllOrNothing::new(k, alpha)?;
    let cfg = QuadConfig::default();
    println!("{:>7} {:>3} {:>10} {:>10}", "theta", "L", "closed", "quad");
    for theta in [-0.6, -0.45, -0.3, -0.15] {
        for l in 1..k {
            let q = eval::error_rate(&rule, Config::canonical(k, l), &vec![theta; k], ErrorMeasure::Fdr, &cfg)?;
            println!("{theta:>7} {l:>3} {:>10.6} {:>10.6}", eval::closed_form_fdr(k, l, theta, alpha), q.value);
        }
    }
    Ok(())
}
