//! Property-based invariants over randomized inputs.

use proptest::prelude::*;

use radprompt::discretize::discretize_fixed_width;
use radprompt::encoders::{class_tokens, FrozenTextEncoder};
use radprompt::grid::{Grid2, Mask2};
use radprompt::metrics::{rank_auc, roc_curve, trapezoid_auc};
use radprompt::prompt::{classify, PromptHeadParams, DEFAULT_TAU};
use radprompt::rng::SplitMix64;
use radprompt::synth::argmax;
use radprompt::texture::{glcm, gldm, glrlm, glszm, GLCM_OFFSETS, GLRLM_DIRECTIONS};
use radprompt::trainer::stratified_folds;

proptest! {
    #[test]
    fn discretization_is_shift_invariant(
        halves in prop::collection::vec(-1000i32..1000, 4..32),
        shift_halves in -4000i32..4000,
        width in 1u32..100,
    ) {
        // half-integer values and shifts are exact in f64, so x - min is
        // unchanged by the shift and the property holds without tolerance
        let values: Vec<f64> = halves.iter().map(|&h| h as f64 * 0.5).collect();
        let shift = shift_halves as f64 * 0.5;
        let cols = values.len();
        let grid = Grid2::new(1, cols, values.clone()).unwrap();
        let shifted = Grid2::new(1, cols, values.iter().map(|v| v + shift).collect()).unwrap();
        let roi = Mask2::filled(1, cols, true);
        let a = discretize_fixed_width(&grid, &roi, width as f64).unwrap();
        let b = discretize_fixed_width(&shifted, &roi, width as f64).unwrap();
        prop_assert_eq!(a.n_levels, b.n_levels);
        prop_assert_eq!(a.grid, b.grid);
    }

    #[test]
    fn texture_matrices_normalize_to_one(seed in 0u64..5000) {
        let mut rng = SplitMix64::new(seed);
        let rows = 2 + rng.next_bounded(8) as usize;
        let cols = 2 + rng.next_bounded(8) as usize;
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.next_bounded(5) as f64 * 25.0)
            .collect();
        let grid = Grid2::new(rows, cols, data).unwrap();
        let roi = Mask2::filled(rows, cols, true);
        let d = discretize_fixed_width(&grid, &roi, 25.0).unwrap();
        for m in [
            glcm(&d, &GLCM_OFFSETS, true).unwrap(),
            glrlm(&d, &GLRLM_DIRECTIONS).unwrap(),
            glszm(&d).unwrap(),
            gldm(&d, 0.0, 1).unwrap(),
        ] {
            let sum: f64 = m.normalized().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_is_invariant_to_embedding_scale(
        seed in 0u64..1000,
        scale in 0.05f64..20.0,
    ) {
        let params = PromptHeadParams::init(2, 6, 8, 3, 2, DEFAULT_TAU).unwrap();
        let encoder = FrozenTextEncoder::new(2, 8, 10, 5);
        let tokens = class_tokens(2, 3, 8);
        let mut rng = SplitMix64::new(seed);
        let x: Vec<f64> = (0..5).map(|_| rng.next_gaussian()).collect();
        let r: Vec<f64> = (0..6).map(|_| rng.next_gaussian()).collect();
        prop_assume!(x.iter().any(|&v| v != 0.0));
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let a = classify(&params, &x, &encoder, &tokens, &r).unwrap();
        let b = classify(&params, &scaled, &encoder, &tokens, &r).unwrap();
        prop_assert_eq!(argmax(&a.probabilities), argmax(&b.probabilities));
    }

    #[test]
    fn rank_auc_agrees_with_trapezoid(
        scores in prop::collection::vec(0.0f64..1.0, 4..40),
        flips in prop::collection::vec(any::<bool>(), 4..40),
    ) {
        let n = scores.len().min(flips.len());
        let scores = &scores[..n];
        let positives = &flips[..n];
        prop_assume!(positives.iter().any(|&p| p) && positives.iter().any(|&p| !p));
        let a = rank_auc(scores, positives);
        let b = trapezoid_auc(&roc_curve(scores, positives));
        prop_assert!((a - b).abs() < 1e-9, "rank {} vs trapezoid {}", a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn stratified_folds_partition_indices(seed in 0u64..1000, k in 2usize..6) {
        let mut rng = SplitMix64::new(seed);
        let n = 8 * k + rng.next_bounded(40) as usize;
        let labels: Vec<usize> = (0..n).map(|_| rng.next_bounded(3) as usize).collect();
        for class in 0..3usize {
            prop_assume!(labels.iter().filter(|&&l| l == class).count() >= k);
        }
        let folds = stratified_folds(&labels, k, seed).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<usize>>());
    }

    #[test]
    fn rng_streams_are_reproducible_and_labeled(seed in any::<u64>(), label in any::<u64>()) {
        let mut a = SplitMix64::derive(seed, label);
        let mut b = SplitMix64::derive(seed, label);
        for _ in 0..8 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = SplitMix64::derive(seed, label.wrapping_add(1));
        let differs = (0..8).any(|_| {
            let x = a.next_u64();
            let y = c.next_u64();
            x != y
        });
        prop_assert!(differs);
    }
}
