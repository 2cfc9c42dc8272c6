use blasts::agents::{
    adaptive_beta, blasts_select, build_distortion_matrix, info_ratio_min, BetaSchedule,
    BlastsParams,
};
use blasts::bandit::{argmax, BanditKind};
use blasts::belief::{ArmPosterior, BeliefState, EnsembleSamples, Prior};
use blasts::rdcore::{solve_rate_distortion, SourceWeights};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ensemble(max_z: usize, max_k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_z, 2..=max_k)
        .prop_flat_map(|(z, k)| prop::collection::vec(prop::collection::vec(0.0f64..1.0, k), z))
}

fn label_entropy_bits(rows: &[Vec<f64>]) -> f64 {
    let k = rows[0].len();
    let mut counts = vec![0usize; k];
    for row in rows {
        counts[argmax(row)] += 1;
    }
    let n = rows.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Brute-force minimum of the ratio over the 4-arm simplex grid with `n`
/// steps per coordinate.
fn simplex_grid_min(deltas: &[f64], vars: &[f64], eps: f64, n: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=n - i {
            for k in 0..=n - i - j {
                let pi = [i, j, k, n - i - j - k].map(|c| c as f64 / n as f64);
                let num: f64 = pi.iter().zip(deltas).map(|(p, d)| p * d).sum();
                let den: f64 = pi.iter().zip(vars).map(|(p, v)| p * v).sum::<f64>() + eps;
                best = best.min(num * num / den);
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distortion_rows_have_a_zero(rows in ensemble(16, 8)) {
        let d = build_distortion_matrix(&EnsembleSamples::from_rows(&rows).unwrap()).unwrap();
        for z in 0..d.rows() {
            let row = d.row(z);
            prop_assert_eq!(row.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
            prop_assert!(row.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn target_rate_stays_below_optimal_action_entropy(rows in ensemble(64, 10), exp in -4.0f64..12.0) {
        let beta = 2f64.powf(exp);
        let d = build_distortion_matrix(&EnsembleSamples::from_rows(&rows).unwrap()).unwrap();
        let tol = 1e-6;
        let sol = solve_rate_distortion(&SourceWeights::uniform(rows.len()).unwrap(), &d, beta, 100, tol).unwrap();
        prop_assert!(sol.rate_bits <= label_entropy_bits(&rows) + 2.0 * tol,
            "rate {} entropy {}", sol.rate_bits, label_entropy_bits(&rows));
    }

    #[test]
    fn info_ratio_beats_simplex_grid(
        deltas in prop::collection::vec(0.0f64..1.0, 4),
        vars in prop::collection::vec(0.0f64..0.3, 4),
    ) {
        let eps = 1e-8;
        let est = info_ratio_min(&deltas, &vars, eps).unwrap();
        prop_assert!(est.psi_bar <= simplex_grid_min(&deltas, &vars, eps, 38) + 1e-4);
        prop_assert!(est.minimizer.iter().filter(|p| **p > 0.0).count() <= 2);
        prop_assert!((est.minimizer.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let num: f64 = est.minimizer.iter().zip(&deltas).map(|(p, d)| p * d).sum();
        let den: f64 = est.minimizer.iter().zip(&vars).map(|(p, v)| p * v).sum::<f64>() + eps;
        prop_assert!((num * num / den - est.psi_bar).abs() <= 1e-9 * est.psi_bar.max(1.0));
    }

    #[test]
    fn adaptive_beta_is_positive_and_finite(rows in ensemble(32, 6)) {
        let (beta, est) = adaptive_beta(&EnsembleSamples::from_rows(&rows).unwrap(), 1e-8).unwrap();
        prop_assert!(beta.is_finite() && beta > 0.0);
        prop_assert!(est.deltas.iter().all(|d| *d >= 0.0));
        prop_assert!(est.variances.iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn large_beta_channel_follows_sample_argmax() {
    let means = [0.2, 0.9, 0.4, 0.6];
    let arms = means
        .iter()
        .map(|&m| ArmPosterior::Normal {
            mean: m,
            var: 1e-10,
        })
        .collect();
    let kind = BanditKind::Gaussian {
        reward_noise_sd: 1.0,
    };
    let belief = BeliefState::with_arms(kind, Prior::default_for(kind), arms).unwrap();
    let params = BlastsParams::new(BetaSchedule::Fixed(2f64.powi(20)));
    let mut s = ChaCha8Rng::seed_from_u64(3);
    let mut a = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let decision = blasts_select(&belief, &params, &mut s, &mut a).unwrap();
        assert_eq!(decision.action, 1);
        for z in 0..decision.solution.channel.rows() {
            assert!(decision.solution.channel.get(z, 1) > 1.0 - 1e-9);
        }
    }
}
