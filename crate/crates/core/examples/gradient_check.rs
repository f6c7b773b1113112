//! Finite-difference check of a motion-gated residual block in f64.
//!
//! cargo run --release --example gradient_check

use lanecast::models::GatedBlock;
use lanecast::tensor::{gradcheck, random_projection, GradCheckOptions, Mode, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lanecast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::<f64>::new();
    let block = GatedBlock::build(&mut store, &mut rng, "block", 3, 6, 2);
    let shape = [2, 3, 8, 8];
    let mut rand = |_| rng.random_range(-1.0..1.0);
    let xa = Tensor::from_fn(&shape, &mut rand);
    let xm = Tensor::from_fn(&shape, &mut rand);
    let report = gradcheck(&store, &[xa, xm], GradCheckOptions::default(), &|t, s, x| {
        let (a, m) = block.forward(t, s, x[0], x[1], Mode::Train)?;
        let la = random_projection(t, a, 1)?;
        let lm = random_projection(t, m, 2)?;
        t.add(la, lm)
    })?;
    println!(
        "{} probes, max relative error {:.2e} at {}",
        report.probes, report.max_rel_error, report.worst
    );
    Ok(())
}
