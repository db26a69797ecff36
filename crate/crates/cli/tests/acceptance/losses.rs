use errag_core::selection::{dpo_loss, sft_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Outcome};

const POINTS: usize = 100;

pub fn closed_forms() -> Outcome {
    let dpo = |a, b, c, d, beta| dpo_loss(a, b, c, d, beta).map_err(|e| e.to_string());

    for (p, q, beta) in [(0.5, 0.5, 1.0), (0.2, 0.7, 0.1), (0.9, 0.3, 3.0)] {
        let got = dpo(p, q, p, q, beta)?;
        ensure((got - std::f64::consts::LN_2).abs() <= 1e-12, || format!("symmetric case gave {got}"))?;
    }
    // log-ratio margin of exactly 1 with beta 1: ln(1 + e^-1)
    let got = dpo(0.5, 0.5 / std::f64::consts::E, 0.3, 0.3, 1.0)?;
    ensure((got - 0.31326168751822286).abs() <= 1e-12, || format!("unit margin gave {got}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..POINTS {
        let mut p = || rng.gen_range(0.01..0.99);
        let (pw, bw, pl, bl) = (p(), p(), p(), p());
        let beta = rng.gen_range(0.05..5.0);
        let h = 1e-4;
        let base = dpo(pw, bw, pl, bl, beta)?;
        let up_w = dpo(pw + h * pw, bw, pl, bl, beta)?;
        let up_l = dpo(pw, bw, pl + h * pl, bl, beta)?;
        ensure(up_w < base, || format!("point {i}: raising pw_theta moved {base} to {up_w}"))?;
        ensure(up_l > base, || format!("point {i}: raising pl_theta moved {base} to {up_l}"))?;
    }

    for n in 1..50 {
        let ps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let want = -(ps.iter().sum::<f64>() / n as f64);
        let got = sft_loss(&ps).map_err(|e| e.to_string())?;
        ensure(got.to_bits() == want.to_bits(), || format!("sft_loss {got} vs {want}"))?;
    }
    Ok(format!("symmetric ln 2, unit margin, {POINTS} finite-difference points, sft = -mean(p)"))
}
