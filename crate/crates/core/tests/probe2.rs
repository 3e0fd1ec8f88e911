//! Temporary box-dimension parameter sweep.
use fbs_core::hurst::{HurstVector, Rect};
use fbs_core::rng::SeedSpec;
use fbs_core::verifier::box_dimension;

#[test]
#[ignore]
fn probe_box_grid() {
    let h = HurstVector::new(vec![0.4, 0.6], 1).unwrap();
    let t_box = Rect::new(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
    for (m, levels) in [(256usize, 5usize), (256, 4), (320, 5), (384, 5)] {
        for fac in [0.75, 1.0, 1.5] {
            let tol = fac * (1.0 / m as f64).powf(0.4);
            let t0 = std::time::Instant::now();
            let mut line = format!("m {m} lv {levels} fac {fac}: ");
            for s in [1u64, 2, 3] {
                match box_dimension(&h, 1, &[0.0], &t_box, m, levels, tol, 50, SeedSpec::new(0xB0 + s, 0)) {
                    Ok(e) => line += &format!("{:.3}({:.2},sk{}) ", e.mean_dim, e.stderr, e.skipped),
                    Err(e) => line += &format!("ERR[{e}] "),
                }
            }
            println!("{line} [{:.1}s]", t0.elapsed().as_secs_f64());
        }
    }
}
