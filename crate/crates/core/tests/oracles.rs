mod common;

use proptest::prelude::*;

use msformula::decomp::{decompose, DecompConfig};
use msformula::elements::{parse_formula, Formula};
use msformula::molgraph::Covariates;
use msformula::predictor::{entropy_lower_bound, pmce, PeakGroups};
use msformula::scoring::{cosine_similarity, MatchConfig};
use msformula::spectra::{Peak, SpectrumRecord};
use msformula::vocab::{candidate_set, Vocabulary, VocabEntry, VocabKind};

fn small_formula() -> impl Strategy<Value = Formula> {
    (0u8..8, 0u8..16, 0u8..3, 0u8..4, 0u8..2, 0u8..2, 0u8..2).prop_map(|(c, h, n, o, s, cl, f)| {
        let mut x = Formula::default();
        for (e, v) in [(0, c), (1, h), (2, n), (3, o), (5, s), (7, cl), (6, f)] {
            x.set_count(e, v);
        }
        x
    })
}

fn spectrum(peaks: Vec<(f64, f64)>) -> SpectrumRecord {
    SpectrumRecord::new(
        "p",
        peaks.into_iter().map(|(m, h)| Peak::new(m, h).unwrap()).collect(),
        None,
        Covariates::default(),
    )
}

fn peaks() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((100.0f64..100.3, 0.01f64..1.0), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_equals_brute_force(p in small_formula(), pick in any::<prop::sample::Index>(), ppm in 1.0f64..30.0) {
        prop_assume!(!p.is_empty());
        let subs = common::all_subformulas(&p);
        let m = common::plain_mass(pick.get(&subs)).max(0.5);
        let cfg = DecompConfig::with_ppm(ppm).unwrap();
        let mut got = decompose(m, &p, &cfg);
        got.sort();
        prop_assert_eq!(got, common::brute_decompose(m, &p, ppm));
    }

    #[test]
    fn cosine_equals_exhaustive(a in peaks(), b in peaks(), tau in 0.01f64..0.2) {
        let (s, t) = (spectrum(a), spectrum(b));
        let cfg = MatchConfig::new(tau).unwrap();
        let r = cosine_similarity(&s, &t, &cfg).unwrap();
        prop_assert!((r.score - common::brute_cosine(&s, &t, tau)).abs() <= 1e-10);
        prop_assert!((r.score - cosine_similarity(&t, &s, &cfg).unwrap().score).abs() <= 1e-12);
        let mut used = std::collections::HashSet::new();
        for &(i, j) in &r.matches {
            prop_assert!((s.peaks()[i].mz - t.peaks()[j].mz).abs() <= tau);
            prop_assert!(used.insert(j));
        }
    }

    #[test]
    fn pmce_never_below_entropy(ys in prop::collection::vec(0.01f64..1.0, 1..5), zs in prop::collection::vec(-4.0f64..4.0, 5..9)) {
        let total: f64 = ys.iter().sum();
        let g = PeakGroups {
            groups: (0..ys.len()).map(|i| vec![i]).collect(),
            heights: ys.iter().map(|y| y / total).collect(),
        };
        let m = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = zs.iter().map(|z| (z - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|v| v / s).collect();
        prop_assert!(pmce(&g, &p).unwrap().loss >= entropy_lower_bound(&g) - 1e-12);
    }

    #[test]
    fn candidates_are_subformulas(p in small_formula(), fs in prop::collection::vec(small_formula(), 1..12)) {
        let entries = fs.iter().enumerate().map(|(i, f)| VocabEntry {
            kind: if i % 2 == 0 { VocabKind::Product } else { VocabKind::Loss },
            formula: *f,
            weight: 1.0 / (i + 1) as f64,
        }).collect();
        let v = Vocabulary::from_entries(entries);
        let cs = candidate_set(&v, &p);
        for e in cs.entries() {
            prop_assert!(common::all_subformulas(&p).contains(&e.formula));
        }
        for f in cs.double_count() {
            prop_assert!(v.product_rank(f).is_some());
            prop_assert!(v.loss_rank(&p.checked_sub(f).unwrap()).is_some());
        }
    }
}

#[test]
fn brute_force_oracle_sanity() {
    let p = parse_formula("C2H6O").unwrap();
    assert_eq!(common::all_subformulas(&p).len(), 3 * 7 * 2);
    let got = common::brute_decompose(46.041865, &p, 10.0);
    assert_eq!(got, vec![p]);
    let s = spectrum(vec![(100.0, 1.0)]);
    let t = spectrum(vec![(100.02, 0.6), (100.04, 0.8)]);
    assert!((common::brute_cosine(&s, &t, 0.05) - 0.8).abs() < 1e-12);
}
