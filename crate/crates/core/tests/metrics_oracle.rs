//! Segmentation metrics against brute-force oracles.

use chaptering::metrics::{
    boundary_edit_distance, boundary_prf, boundary_similarity, pk, PkWindow, Segmentation,
};
use proptest::prelude::*;

mod common;
use common::oracles::{b_oracle, pk_oracle, prf_oracle};

/// Random segmentation with total mass `total`.
fn masses_for(total: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(any::<bool>(), total - 1).prop_map(move |cuts| {
        let mut out = Vec::new();
        let mut run = 0;
        for c in cuts {
            run += 1;
            if c {
                out.push(run);
                run = 0;
            }
        }
        out.push(run + 1);
        out
    })
}

fn pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..=12).prop_flat_map(|t| (masses_for(t), masses_for(t)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn prf_matches_oracle((r, h) in pair()) {
        let got = boundary_prf(&Segmentation::from_masses(r.clone()).unwrap(), &Segmentation::from_masses(h.clone()).unwrap()).unwrap();
        let want = prf_oracle(&r, &h);
        prop_assert_eq!((got.precision, got.recall, got.f1), want);
    }

    #[test]
    fn pk_matches_oracle((r, h) in pair(), k in 1usize..6) {
        let rs = Segmentation::from_masses(r.clone()).unwrap();
        let hs = Segmentation::from_masses(h.clone()).unwrap();
        match (pk(&rs, &hs, PkWindow::Fixed(k)), pk_oracle(&r, &h, k)) {
            (Ok(a), Some(b)) => prop_assert_eq!(a, b),
            (Err(_), None) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn b_matches_oracle((r, h) in pair()) {
        let n_t = 2;
        let got = boundary_similarity(&Segmentation::from_masses(r.clone()).unwrap(), &Segmentation::from_masses(h.clone()).unwrap(), n_t).unwrap();
        prop_assert!((got - b_oracle(&r, &h, n_t)).abs() < 1e-9);
    }

    #[test]
    fn b_is_symmetric_and_bounded((r, h) in pair()) {
        let rs = Segmentation::from_masses(r).unwrap();
        let hs = Segmentation::from_masses(h).unwrap();
        let a = boundary_similarity(&rs, &hs, 2).unwrap();
        let b = boundary_similarity(&hs, &rs, 2).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn identical_segmentations_score_perfectly(r in (1usize..=12).prop_flat_map(masses_for)) {
        let s = Segmentation::from_masses(r).unwrap();
        prop_assert_eq!(boundary_similarity(&s, &s, 2).unwrap(), 1.0);
        if let Ok(v) = pk(&s, &s, PkWindow::Auto) {
            prop_assert_eq!(v, 0.0);
        }
    }
}

#[test]
fn edit_distance_counts_each_boundary_once() {
    let e = boundary_edit_distance(&[2, 4, 6], &[3, 6, 8], 2);
    assert_eq!(e.matches, vec![6]);
    assert_eq!(e.transpositions, vec![(2, 3)]);
    assert_eq!(e.additions.len(), 2);
}
