use jointsa::design::{read_csv, sample_lhs, write_csv};
use jointsa::glm::fit_glm;
use jointsa::smooth::build_cubic_basis;
use jointsa::sobol::{first_order_index, Bounds, IndexLabel, Method, SobolEstimate};
use jointsa::terms::parse_terms;
use jointsa::{Dataset, Design, Family, InputDistribution, SaProblem, TermSpec};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

fn linear_problem(a: f64, b: f64) -> SaProblem<'static> {
    SaProblem::new(
        move |x: &Design| Ok(DVector::from_fn(x.nrows(), |i, _| a * x.points[(i, 0)] + b * x.points[(i, 1)])),
        vec![InputDistribution::uniform(0.0, 1.0).unwrap(); 2],
        Design::default_names(2),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lhs_has_one_point_per_stratum(n in 2usize..60, p in 1usize..5, seed in any::<u64>()) {
        let dists = vec![InputDistribution::uniform(-2.0, 3.0).unwrap(); p];
        let d = sample_lhs(&dists, n, seed).unwrap();
        for j in 0..p {
            let mut hit = vec![false; n];
            for i in 0..n {
                let u = (d.points[(i, j)] + 2.0) / 5.0;
                let k = ((u * n as f64).floor() as usize).min(n - 1);
                prop_assert!(!hit[k]);
                hit[k] = true;
            }
        }
    }

    #[test]
    fn glm_matches_least_squares(seed in any::<u64>(), c in -3.0f64..3.0) {
        let dists = vec![InputDistribution::uniform(-1.0, 1.0).unwrap(); 2];
        let x = sample_lhs(&dists, 40, seed).unwrap();
        let y = DVector::from_fn(40, |i, _| c + x.points[(i, 0)] - 2.0 * x.points[(i, 1)].powi(2) + (i as f64 * 0.7).sin());
        let terms = vec![TermSpec::Intercept, TermSpec::linear("x1"), TermSpec::power("x2", 2)];
        let fit = fit_glm(&Dataset::new(x.clone(), y.clone()).unwrap(), &terms, Family::gaussian()).unwrap();
        let xm = DMatrix::from_fn(40, 3, |i, j| match j { 0 => 1.0, 1 => x.points[(i, 0)], _ => x.points[(i, 1)].powi(2) });
        let ols = xm.svd(true, true).solve(&y, 1e-14).unwrap();
        prop_assert!((&fit.beta - &ols).amax() <= 1e-10);
    }

    #[test]
    fn cubic_penalty_is_symmetric_psd(xs in prop::collection::vec(-5.0f64..5.0, 30..80), k in 5usize..12) {
        let b = build_cubic_basis("x", &xs, k).unwrap();
        let s = &b.penalty;
        let top = s.amax().max(1e-300);
        prop_assert!((s - s.transpose()).amax() <= 1e-12 * top);
        let eig = SymmetricEigen::new(s.clone()).eigenvalues;
        prop_assert!(eig.min() >= -1e-9 * eig.amax());
    }

    #[test]
    fn pick_freeze_is_deterministic_and_recovers_linear_indices(a in 0.5f64..3.0, b in 0.5f64..3.0, seed in any::<u64>()) {
        let pb = linear_problem(a, b);
        let e1 = first_order_index(&pb, 0, 4000, seed).unwrap();
        let e2 = first_order_index(&pb, 0, 4000, seed).unwrap();
        prop_assert_eq!(e1.value, e2.value);
        let exact = a * a / (a * a + b * b);
        prop_assert!((e1.value - exact).abs() < 0.1);
    }

    #[test]
    fn index_labels_roundtrip(i in 0usize..12, j in 0usize..12) {
        let p = 12;
        for l in [IndexLabel::First(i), IndexLabel::DispersionFirst(i)] {
            prop_assert_eq!(IndexLabel::parse(&l.label_for(p), p).unwrap(), l);
        }
        if i < j {
            let l = IndexLabel::Second(i, j);
            prop_assert_eq!(IndexLabel::parse(&l.label_for(p), p).unwrap(), l);
        }
    }

    #[test]
    fn bounded_display_shows_both_ends(lo in 0.0f64..0.5, w in 0.0f64..0.5) {
        let e = SobolEstimate::bounded("ST1", Bounds { lower: lo, upper: lo + w, lower_open: true, upper_open: false }, Method::Eq);
        let text = e.display_value();
        prop_assert!(text.starts_with(']') && text.ends_with(']'));
        prop_assert_eq!(e.value, lo + w);
    }

    #[test]
    fn csv_roundtrip_is_exact(vals in prop::collection::vec(-1e6f64..1e6, 6..30)) {
        let n = vals.len() / 2;
        let x = Design::new(DMatrix::from_fn(n, 1, |i, _| vals[i]), vec!["x1".into()]).unwrap();
        let y = DVector::from_fn(n, |i, _| vals[n + i]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&Dataset::new(x.clone(), y.clone()).unwrap(), &path).unwrap();
        let back = read_csv(std::fs::File::open(&path).unwrap(), Some("y")).unwrap();
        prop_assert_eq!(back.design.points, x.points);
        prop_assert_eq!(back.response, y);
    }

    #[test]
    fn formula_parser_never_panics(s in "[ x0-9s()+^,=k.]{0,24}") {
        let _ = parse_terms(&s);
    }
}
