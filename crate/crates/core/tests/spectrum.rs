mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;

use common::{gram_oracle, random_matrix, rng, svd_oracle};
use sourcebias::spectrum::{compare_spectra, embedding_spectrum, singular_values, HeadTail, Matrix, Spectrum};
use sourcebias::store::EmbeddingSet;

fn sv(rows: &[Vec<f64>]) -> Vec<f64> {
    singular_values(&Matrix::from_rows(rows).unwrap()).unwrap().singular_values
}

fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
    let scale = a.first().copied().unwrap_or(0.0).max(1e-300);
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= rel * scale)
}

#[test]
fn diagonal_matrix() {
    let s = sv(&[vec![3.0, 0.0], vec![0.0, -5.0], vec![0.0, 0.0]]);
    assert!(close(&s, &[5.0, 3.0], 1e-14));
}

#[test]
fn rank_one_matrix() {
    let s = sv(&[vec![1.0, 2.0, 2.0], vec![2.0, 4.0, 4.0]]);
    assert!((s[0] - 45f64.sqrt()).abs() < 1e-12);
    assert!(s[1].abs() < 1e-7);
}

#[test]
fn wide_and_tall_agree_with_nalgebra() {
    let mut r = rng(3);
    for (n, d) in [(5, 40), (40, 5), (1, 7), (7, 1), (16, 16)] {
        let m = random_matrix(&mut r, n, d);
        assert!(close(&sv(&m), &svd_oracle(&m), 1e-10), "{n}x{d}");
    }
}

#[test]
fn centered_constant_rows_vanish() {
    let rows = vec![vec![1.0, 2.0]; 4];
    let s = singular_values(&Matrix::from_rows(&rows).unwrap().centered()).unwrap();
    assert!(s.singular_values.iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn embedding_spectrum_from_fixture() {
    let set = sourcebias::store::load_embeddings(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/embeddings.jsonl")).unwrap();
    let s = embedding_spectrum(&set, false).unwrap();
    assert_eq!((s.rows, s.cols, s.len()), (12, 4, 4));
    let total: f64 = s.normalized().iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(embedding_spectrum(&EmbeddingSet::new(3).unwrap(), false).is_err());
}

fn spectrum(values: Vec<f64>) -> Spectrum {
    Spectrum {
        rows: values.len(),
        cols: values.len(),
        centered: false,
        singular_values: values,
    }
}

#[test]
fn comparison_summaries() {
    let flat = spectrum(vec![1.0; 10]);
    let same = compare_spectra(&flat, &flat).unwrap();
    assert_eq!(same.summary, HeadTail::NoDifference);
    let peaked = spectrum(vec![5.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5]);
    assert_eq!(compare_spectra(&flat, &peaked).unwrap().summary, HeadTail::HeadHeavyGenerated);
    assert_eq!(compare_spectra(&peaked, &flat).unwrap().summary, HeadTail::HeadHeavyHuman);
    assert!(compare_spectra(&flat, &spectrum(vec![1.0; 3])).is_err());
}

proptest! {
    #[test]
    fn matches_gram_eigenvalues_and_frobenius(seed in any::<u64>(), n in 1usize..40, d in 1usize..20) {
        let m = random_matrix(&mut rng(seed), n, d);
        let s = sv(&m);
        prop_assert!(close(&s, &gram_oracle(&m), 1e-8));
        let fro: f64 = m.iter().flatten().map(|x| x * x).sum();
        let sum_sq: f64 = s.iter().map(|x| x * x).sum();
        prop_assert!((sum_sq - fro).abs() <= 1e-8 * fro.max(1e-300));
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn row_permutation_invariant(seed in any::<u64>(), n in 1usize..30, d in 1usize..10) {
        let mut r = rng(seed);
        let m = random_matrix(&mut r, n, d);
        let mut p = m.clone();
        p.shuffle(&mut r);
        prop_assert!(close(&sv(&m), &sv(&p), 1e-10));
    }

    #[test]
    fn scales_linearly(seed in any::<u64>(), n in 1usize..30, d in 1usize..10, c in -100.0f64..100.0) {
        prop_assume!(c.abs() > 1e-3);
        let m = random_matrix(&mut rng(seed), n, d);
        let scaled: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|x| c * x).collect()).collect();
        let expect: Vec<f64> = sv(&m).iter().map(|x| x * c.abs()).collect();
        prop_assert!(close(&sv(&scaled), &expect, 1e-10));
    }
}
