use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use usfft::fixtures::SparseTrigPolynomials;
use usfft::lattice::{find_reconstructing, lattice_coefficients};
use usfft::periodize::{lognormal_forward, lognormal_inverse, tent_forward, tent_inverse};
use usfft::post::{error_report, expectation, gsi_by_order, variance};
use usfft::{Approximant, CMatrix, CandidateGrid, Complex64, Frequency, FrequencySet, Periodization};

fn freq_set(dim: usize, max_len: usize, half: i32) -> impl Strategy<Value = FrequencySet> {
    prop::collection::vec(prop::collection::vec(-half..=half, dim), 1..=max_len).prop_map(move |ks| {
        FrequencySet::from_frequencies(dim, ks.into_iter().map(Frequency::new)).unwrap()
    })
}

fn coeffs(rows: usize, cols: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols).prop_map(move |v| {
        CMatrix::from_vec(rows, cols, v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
    })
}

fn approximant(dim: usize, outputs: usize, p: Periodization) -> impl Strategy<Value = Approximant> {
    freq_set(dim, 24, 6).prop_flat_map(move |set| {
        let n = set.len();
        coeffs(outputs, n).prop_map(move |c| Approximant::new(set.clone(), c, p).unwrap())
    })
}

fn any_periodization() -> impl Strategy<Value = Periodization> {
    prop_oneof![
        Just(Periodization::None),
        Just(Periodization::Tent { alpha: -1.0, beta: 1.0 }),
        Just(Periodization::Lognormal { delta: 1.0 / (4.0 * 4099.0) }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_composes(set in freq_set(5, 40, 4), perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(), keep in 1usize..=5, inner in 1usize..=5) {
        let outer = &perm[..keep];
        let once = set.project(outer).unwrap();
        let inner = inner.min(keep);
        let twice = once.project(&(0..inner).collect::<Vec<_>>()).unwrap();
        let direct = set.project(&outer[..inner]).unwrap();
        prop_assert_eq!(twice.sorted(), direct.sorted());
        prop_assert!(once.len() <= set.len());
    }

    #[test]
    fn cross_intersect_is_grid_restricted_product(left in freq_set(3, 20, 5), right in freq_set(1, 8, 5), n in 1u32..=5) {
        let grid = CandidateGrid::symmetric(4, n).unwrap();
        let out = FrequencySet::cross_intersect(&left, &right, &grid).unwrap();
        for k in out.iter() {
            prop_assert!(grid.contains(k));
            prop_assert!(left.contains(&Frequency::new(k[..3].to_vec())));
            prop_assert!(right.contains(&Frequency::new(vec![k[3]])));
        }
        let expected = left.iter().filter(|k| (0..3).all(|j| grid.contains_component(j, k[j]))).count()
            * right.iter().filter(|k| grid.contains_component(3, k[0])).count();
        prop_assert_eq!(out.len(), expected);
    }

    #[test]
    fn nnz_partition_is_a_partition(set in freq_set(4, 40, 2)) {
        let parts = set.nnz_partition();
        prop_assert_eq!(parts.values().map(FrequencySet::len).sum::<usize>(), set.len());
        for (l, part) in &parts {
            prop_assert!(!part.is_empty());
            prop_assert!(part.iter().all(|k| k.nnz() == *l && set.contains(k)));
        }
    }

    #[test]
    fn reconstructing_lattice_inverts_evaluation(set in freq_set(4, 30, 12), seed in any::<u64>(), c in coeffs(1, 30)) {
        let lat = find_reconstructing(&set, seed).unwrap();
        prop_assert!(lat.is_reconstructing(&set).unwrap());
        let c = &c.row(0)[..set.len()];
        let samples: Vec<Complex64> = (0..lat.size())
            .map(|i| {
                let x = lat.node(i);
                set.iter().zip(c).map(|(k, c)| {
                    let ph: f64 = k.iter().zip(&x).map(|(&kj, xj)| kj as f64 * xj).sum();
                    c * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * ph)
                }).sum()
            })
            .collect();
        let rec = lattice_coefficients(&samples, &set, &lat).unwrap();
        for (a, b) in rec.iter().zip(c) {
            prop_assert!((a - b).norm() <= 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn tent_round_trip(y in -3.0f64..=2.0, width in 0.1f64..5.0, frac in 0.0f64..=1.0) {
        let (alpha, beta) = (y - frac * width, y - frac * width + width);
        let t = tent_inverse(y, alpha, beta).unwrap();
        prop_assert!((0.0..=0.5).contains(&t));
        prop_assert!((tent_forward(t, alpha, beta) - y).abs() <= 1e-12 * (1.0 + y.abs()));
    }

    #[test]
    fn lognormal_round_trip(z in -6.0f64..=6.0, m0 in 3u64..10_000) {
        let delta = 1.0 / (4.0 * m0 as f64);
        let t = lognormal_inverse(z, delta);
        prop_assert!(t > delta && t < delta + 0.5);
        let back = lognormal_forward(t, delta).unwrap();
        // One rounding of the torus point moves z by about ε·t·2/φ(z).
        let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let tol = 1e-10 + 4.0 * f64::EPSILON * t / density;
        prop_assert!((back - z).abs() <= tol, "{} -> {} -> {}", z, t, back);
        if z.abs() <= 4.5 {
            prop_assert!((back - z).abs() <= 1e-10);
        }
    }

    #[test]
    fn gsi_classes_sum_to_one(app in approximant(4, 3, Periodization::None)) {
        let gsi = gsi_by_order(&app).unwrap();
        let var = variance(&app);
        for (g, v) in var.iter().enumerate() {
            let sum: f64 = gsi.values().map(|(_, r)| r[g]).sum();
            if *v > 0.0 {
                prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {}", sum);
            } else {
                prop_assert_eq!(sum, 0.0);
            }
            prop_assert!(gsi.values().all(|(_, r)| (0.0..=1.0 + 1e-15).contains(&r[g])));
        }
    }

    #[test]
    fn expectation_is_linear(p in any_periodization(), app in approximant(3, 2, Periodization::None), a in -3.0f64..3.0) {
        let app = Approximant::new(app.frequencies().clone(), app.coefficients().clone(), p).unwrap();
        let c = app.coefficients();
        // Row 0 of `mixed` is a·f₀ + f₁.
        let mixed: Vec<Complex64> = c.row(0).iter().zip(c.row(1)).map(|(x, y)| x * a + y).collect();
        let combo = Approximant::new(app.frequencies().clone(), CMatrix::from_rows(vec![mixed]), p).unwrap();
        let e = expectation(&app);
        let ec = expectation(&combo);
        let want = a * e.values[0] + e.values[1];
        prop_assert!((ec.values[0] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        let want_im = a * e.imaginary[0] + e.imaginary[1];
        prop_assert!((ec.imaginary[0] - want_im).abs() <= 1e-12 * (1.0 + want_im.abs()));
    }

    #[test]
    fn archive_round_trip_is_exact(p in any_periodization(), app in approximant(3, 2, Periodization::None)) {
        let app = Approximant::new(app.frequencies().clone(), app.coefficients().clone(), p).unwrap();
        let back = Approximant::from_archive(&app.to_archive()).unwrap();
        prop_assert_eq!(back.to_archive(), app.to_archive());
        for k in app.frequencies().iter() {
            let (i, j) = (app.frequencies().index_of(k).unwrap(), back.frequencies().index_of(k).unwrap());
            for g in 0..2 {
                prop_assert_eq!(app.coefficients().get(g, i), back.coefficients().get(g, j));
            }
        }
        prop_assert_eq!(back.periodization(), app.periodization());
    }

    #[test]
    fn error_norms_increase_with_p(seed in any::<u64>(), drop in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = SparseTrigPolynomials::random(3, 2, 12, 8, 6, 1.0, &mut rng);
        // Surrogate missing the last `drop` pool frequencies.
        let kept: Vec<usize> = (0..12 - drop).collect();
        let set = FrequencySet::from_frequencies(3, kept.iter().map(|&j| truth.frequencies().get(j).unwrap().clone())).unwrap();
        let app = Approximant::new(set, truth.coefficients().select_columns(&kept), Periodization::None).unwrap();
        let rep = error_report(&app, &truth, 200, seed).unwrap();
        for g in 0..2 {
            prop_assert!(rep.err1[g] <= rep.err2[g] * (1.0 + 1e-12));
            prop_assert!(rep.err2[g] <= rep.err_inf[g] * (1.0 + 1e-12));
        }
    }
}
