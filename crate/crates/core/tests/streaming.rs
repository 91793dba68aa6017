use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use recdev_core::estimator::Axis;
use recdev_core::{BandwidthKind, BandwidthSchedule, Grid, KernelKind, KernelModel, MultiIndex, RecursiveEstimator, TrueDensity};

/// `(1/n) Σ h_i^{-(d+|α|)} ∂^[α]K((x - X_i)/h_i)`, summed in one pass.
fn batch(kernel: &KernelModel, schedule: &BandwidthSchedule, alpha: &MultiIndex, obs: &[Vec<f64>], x: &[f64]) -> f64 {
    let d = x.len();
    let mut total = 0.0;
    for (i, xi) in obs.iter().enumerate() {
        let h = schedule.h(i as u64 + 1);
        let z: Vec<f64> = x.iter().zip(xi).map(|(a, b)| (a - b) / h).collect();
        total += kernel.deriv_eval(alpha, &z) / h.powi(d as i32 + alpha.order() as i32);
    }
    total / obs.len() as f64
}

fn run(kind: KernelKind, alpha: Vec<u32>, grid: Grid, obs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = grid.dim();
    let kernel = KernelModel::builtin(kind, d).unwrap();
    let schedule = BandwidthSchedule::new(BandwidthKind::PowerLog, 0.6, 0.2).unwrap();
    let alpha = MultiIndex::new(alpha).unwrap();
    let mut est = RecursiveEstimator::new(kernel.clone(), schedule.clone(), alpha.clone(), grid.clone()).unwrap();
    for x in obs {
        est.update(x).unwrap();
    }
    let oracle = grid.points().map(|x| batch(&kernel, &schedule, &alpha, obs, &x)).collect();
    (est.values().unwrap(), oracle)
}

fn sample(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density = TrueDensity::standard_gaussian(d);
    (0..n)
        .map(|_| {
            let mut x = vec![0.0; d];
            density.sample(&mut rng, &mut x);
            x
        })
        .collect()
}

#[test]
fn permuted_stream_changes_the_estimate() {
    let grid = Grid::single(&[0.3]).unwrap();
    let obs = sample(1, 200, 5);
    let mut reversed = obs.clone();
    reversed.reverse();
    let (a, _) = run(KernelKind::Gaussian, vec![0], grid.clone(), &obs);
    let (b, _) = run(KernelKind::Gaussian, vec![0], grid, &reversed);
    assert_ne!(a, b, "each observation carries its own bandwidth, so order matters");
}

#[test]
fn two_dimensional_mixed_derivative() {
    let grid = Grid::new(vec![Axis::new(-1.0, 1.0, 4).unwrap(), Axis::new(-0.5, 2.0, 5).unwrap()]).unwrap();
    let obs = sample(2, 500, 9);
    let (got, want) = run(KernelKind::Quartic, vec![1, 1], grid, &obs);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{g} vs {w}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn streaming_equals_batch(
        seed in any::<u64>(),
        n in 1usize..300,
        kind in prop_oneof![Just(KernelKind::Gaussian), Just(KernelKind::Epanechnikov), Just(KernelKind::Quartic)],
        order in 0u32..2,
        lo in -3.0f64..0.0,
        span in 0.5f64..4.0,
    ) {
        // Epanechnikov has a kink at ±1, so no derivative estimator.
        prop_assume!(!(kind == KernelKind::Epanechnikov && order > 0));
        let grid = Grid::new(vec![Axis::new(lo, lo + span, 7).unwrap()]).unwrap();
        let obs = sample(1, n, seed);
        let (got, want) = run(kind, vec![order], grid, &obs);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{} vs {}", g, w);
        }
    }
}
