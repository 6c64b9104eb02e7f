//! Finite-difference gradient check of the three model variants at 64 and
//! 32-bit precision.

use tonelab::nn::gradcheck::{random_batch, tiny_config};
use tonelab::nn::{check_model, Model, Variant};

fn main() -> tonelab::Result<()> {
    for variant in [Variant::Baseline, Variant::Sf, Variant::SfCtx] {
        let cfg = tiny_config(variant);
        let batch = random_batch(&cfg, 4, 11)?;
        let m64 = Model::<f64>::new(cfg.clone(), 5)?;
        let r64 = check_model(&m64, &batch, 1e-5, 200, 1)?;
        let r32 = check_model(&Model::<f32>::new(cfg, 5)?, &batch, 1e-5, 200, 1)?;
        println!(
            "{:>8}: {} params, f64 max rel err {:.2e}, f32 max rel err {:.2e}",
            variant.as_str(),
            r64.total,
            r64.max_rel_err,
            r32.max_rel_err
        );
    }
    Ok(())
}
