use std::f64::consts::TAU;

use kuramoto_oed::kuramoto::{simulate_sync, KuramotoModel, SimConfig};
use kuramoto_oed::parallel::substream;
use rand::Rng;

#[test]
fn halving_the_step_never_flips_two_oscillator_verdicts() {
    let coarse = SimConfig::default();
    let fine = SimConfig {
        solver_substeps: 2,
        ..SimConfig::default()
    };
    let mut rng = substream(0x7E0, 0);
    let mut checked = 0;
    while checked < 1000 {
        let w = [rng.gen_range(-TAU..TAU), rng.gen_range(-TAU..TAU)];
        let dw = (w[0] - w[1]).abs();
        let a = rng.gen_range(0.0..dw);
        if (dw / 2.0 - a).abs() <= 0.05 * a {
            continue;
        }
        checked += 1;
        let model = KuramotoModel::with_zero_phases(w.to_vec(), vec![a]).unwrap();
        assert_eq!(
            simulate_sync(&model, &coarse).unwrap(),
            simulate_sync(&model, &fine).unwrap(),
            "omega {w:?}, a {a}"
        );
    }
}
