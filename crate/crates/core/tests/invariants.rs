//! Cross-module invariants on seeded paths.

use pathwise::estimators::moment_table;
use pathwise::fields::{drift, scalar};
use pathwise::occupation::{rho, sigma};
use pathwise::solver::{
    euler, girsanov_transform, partition_factory, picard_uniqueness, random_admissible_start, PicardOptions,
};
use pathwise::{DyadicIndex, DyadicPath, Skeleton};
use proptest::prelude::*;

const KINDS: [&str; 3] = ["uniform", "random_dyadic", "adversarial_extrema"];
const DRIFTS: [&str; 4] = ["sign", "checkerboard_4", "lip_sin", "time_flip"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn euler_drift_part_within_envelope(seed in 0u64..1_000, kind in 0usize..3, which in 0usize..4, e in 3u32..7) {
        let path = DyadicPath::generate(seed, 1, 12).unwrap();
        let f = drift(DRIFTS[which], 1).unwrap();
        let n = 1usize << e;
        let part = partition_factory(KINDS[kind], n, Some(&path as &dyn Skeleton), seed ^ 0x55).unwrap();
        let res = euler(&path, f.as_ref(), &part).unwrap();
        for (i, t) in res.partition.times().iter().enumerate() {
            let u = res.drift_part[i].abs();
            prop_assert!(u <= f.bound() * t * (1.0 + 1e-12) + 1e-15, "u = {u} at t = {t}");
        }
    }

    #[test]
    fn girsanov_recovers_the_noise(seed in 0u64..1_000, kind in 0usize..3, which in 0usize..4) {
        let path = DyadicPath::generate(seed, 1, 12).unwrap();
        let f = drift(DRIFTS[which], 1).unwrap();
        let part = partition_factory(KINDS[kind], 64, Some(&path as &dyn Skeleton), seed).unwrap();
        let res = euler(&path, f.as_ref(), &part).unwrap();
        let w = girsanov_transform(&res, f.as_ref());
        for (a, b) in w.iter().zip(&res.noise) {
            prop_assert!((a - b).abs() <= 64.0 * f64::EPSILON * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn rho_splits_into_sigmas(seed in 0u64..1_000, n in 0u32..5, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let path = DyadicPath::generate(seed, 1, 12).unwrap();
        let g = scalar("sign", 1).unwrap();
        let idx = DyadicIndex::new(n, 0).unwrap();
        let r = rho(&path, g.as_ref(), idx, &[x], &[y], 10).unwrap().value;
        let sx = sigma(&path, g.as_ref(), idx, &[x], 10).unwrap().value;
        let sy = sigma(&path, g.as_ref(), idx, &[y], 10).unwrap().value;
        prop_assert!((r - (sx - sy)).abs() <= 1e-12, "{r} vs {}", sx - sy);
    }

    #[test]
    fn picard_iterates_grow_at_most_linearly(seed in 0u64..1_000, start in 0u64..1_000, which in 0usize..4) {
        let path = DyadicPath::generate(seed, 1, 10).unwrap();
        let f = drift(DRIFTS[which], 1).unwrap();
        let u0 = random_admissible_start(8, 1, start);
        let opts = PicardOptions { max_iter: 5, tol: 0.0, keep_iterates: true };
        let res = picard_uniqueness(&path, f.as_ref(), 8, &u0, opts).unwrap();
        for u in res.iterates.iter().skip(1) {
            for k in 0..=(1usize << 8) {
                let t = k as f64 / 256.0;
                prop_assert!(u.at(k)[0].abs() <= 2.0 * f.bound() * t + 1e-12);
            }
        }
    }
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let g = scalar("checkerboard_4", 1).unwrap();
    let xs = vec![vec![0.3], vec![0.05]];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| moment_table(g.as_ref(), &xs, &[2, 4], 257, 11, 10).unwrap())
    };
    let (a, b) = (run(1), run(5));
    assert_eq!(a.cells.len(), b.cells.len());
    for (ca, cb) in a.cells.iter().zip(&b.cells) {
        assert_eq!(ca.estimate.to_bits(), cb.estimate.to_bits());
        assert_eq!(ca.variance.to_bits(), cb.variance.to_bits());
    }
}
