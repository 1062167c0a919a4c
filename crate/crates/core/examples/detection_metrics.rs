//! EER and MinDCF from a pair of Gaussian score distributions, plus a few
//! points of the DET trade-off.
//!
//!     cargo run --example detection_metrics [-- separation]

use std::error::Error;

use pbmsv::eval::{det_metrics, DcfParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn Error>> {
    let sep: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let tgt: Vec<f64> = Normal::new(sep, 1.0)?.sample_iter(&mut rng).take(2_000).collect();
    let non: Vec<f64> = Normal::new(0.0, 1.0)?.sample_iter(&mut rng).take(20_000).collect();

    for dcf in [DcfParams::default(), DcfParams { c_miss: 1.0, c_fa: 1.0, p_target: 0.5 }] {
        let m = det_metrics(&tgt, &non, &dcf)?;
        println!(
            "separation {sep}: EER {:.2}%  MinDCF(c_miss={}, c_fa={}, p={}) {:.4}",
            100.0 * m.eer, dcf.c_miss, dcf.c_fa, dcf.p_target, m.min_dcf
        );
    }
    let m = det_metrics(&tgt, &non, &DcfParams::default())?;
    println!("\n{:>10} {:>8} {:>8}", "threshold", "P_miss", "P_fa");
    let step = m.points.len() / 10;
    for p in m.points.iter().step_by(step.max(1)) {
        println!("{:>10.3} {:>8.4} {:>8.4}", p.threshold, p.p_miss, p.p_fa);
    }
    Ok(())
}
