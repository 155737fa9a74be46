mod common;

use approx::assert_abs_diff_eq;
use ndarray::{array, Array1, Array2};
use polyprobe::attention::{aggregate_layers, cumulative_max, head_attention_to_cue, AttentionError};
use polyprobe::trace::Span;
use proptest::prelude::*;
use rand::Rng;

use common::*;

#[test]
fn single_token_spans_read_the_raw_weight() {
    let mut rng = rng(1);
    let a = random_stochastic(&mut rng, 6);
    assert_eq!(head_attention_to_cue(a.view(), Span::new(2, 3), Span::new(4, 5)).unwrap(), a[[2, 4]]);
}

#[test]
fn uniform_attention_gives_span_fraction() {
    for n in [4usize, 8, 16] {
        let a = Array2::from_elem((n, n), 1.0 / n as f64);
        for m in 1..n {
            let s = head_attention_to_cue(a.view(), Span::new(0, 1), Span::new(1, 1 + m)).unwrap();
            assert_eq!(s, m as f64 / n as f64);
        }
    }
}

#[test]
fn two_token_spans_match_double_loop() {
    let mut rng = rng(2);
    for _ in 0..200 {
        let a = random_stochastic(&mut rng, 9);
        let got = head_attention_to_cue(a.view(), Span::new(1, 3), Span::new(5, 7)).unwrap();
        assert_abs_diff_eq!(got, brute_attention(&a, (1, 3), (5, 7)), epsilon = 1e-12);
    }
}

#[test]
fn errors_on_overlap_and_bad_rows() {
    let a = Array2::from_elem((4, 4), 0.25);
    assert!(matches!(
        head_attention_to_cue(a.view(), Span::new(0, 2), Span::new(1, 3)),
        Err(AttentionError::SpanOverlap { .. })
    ));
    assert!(matches!(
        head_attention_to_cue(a.view(), Span::new(0, 1), Span::new(3, 5)),
        Err(AttentionError::SpanOutOfRange { .. })
    ));
    let mut bad = a.clone();
    bad[[0, 0]] = 0.3;
    assert!(matches!(
        head_attention_to_cue(bad.view(), Span::new(0, 1), Span::new(2, 3)),
        Err(AttentionError::RowSumViolation { row: 0, .. })
    ));
    // Within tolerance.
    bad[[0, 0]] = 0.25 + 5e-5;
    assert!(head_attention_to_cue(bad.view(), Span::new(0, 1), Span::new(2, 3)).is_ok());
    let rect = Array2::from_elem((3, 4), 0.25);
    assert!(matches!(
        head_attention_to_cue(rect.view(), Span::new(0, 1), Span::new(2, 3)),
        Err(AttentionError::NotSquare(3, 4))
    ));
}

#[test]
fn full_mass_on_cue_scores_one() {
    let mut a = Array2::zeros((4, 4));
    a[[0, 2]] = 0.5;
    a[[0, 3]] = 0.5;
    a[[1, 2]] = 1.0;
    a[[2, 2]] = 1.0;
    a[[3, 3]] = 1.0;
    assert_eq!(head_attention_to_cue(a.view(), Span::new(0, 2), Span::new(2, 4)).unwrap(), 1.0);
}

#[test]
fn layer_aggregation() {
    let (mean, max) = aggregate_layers(array![[0.2, 0.4], [0.7, 0.1]].view());
    assert_abs_diff_eq!(mean[0], 0.3, epsilon = 1e-15);
    assert_eq!(max.to_vec(), vec![0.4, 0.7]);
    let (mean, max) = aggregate_layers(array![[0.35], [0.05]].view());
    assert_eq!(mean, max);

    let mut rng = rng(3);
    let ph = Array2::from_shape_fn((6, 5), |_| rng.gen_range(0.0..1.0));
    let (mean, max) = aggregate_layers(ph.view());
    for l in 0..6 {
        let row: Vec<f64> = ph.row(l).to_vec();
        assert_abs_diff_eq!(mean[l], row.iter().sum::<f64>() / 5.0, epsilon = 1e-15);
        assert_eq!(max[l], row.iter().copied().fold(f64::MIN, f64::max));
        assert!(max[l] >= mean[l]);
    }
}

#[test]
fn running_maximum() {
    assert_eq!(cumulative_max(array![0.1, 0.3, 0.2].view()).to_vec(), vec![0.1, 0.3, 0.3]);
    let up = array![0.1, 0.1, 0.4, 0.9];
    assert_eq!(cumulative_max(up.view()), up);
    assert!(cumulative_max(Array1::<f64>::zeros(0).view()).is_empty());
}

proptest! {
    #[test]
    fn widening_the_cue_never_lowers_the_score(seed in any::<u64>(), n in 5usize..16) {
        let mut rng = rng(seed);
        let a = random_stochastic(&mut rng, n);
        let target = Span::new(0, 1);
        let mut last = 0.0;
        for end in 2..=n {
            let s = head_attention_to_cue(a.view(), target, Span::new(1, end)).unwrap();
            prop_assert!(s >= last - 1e-15);
            prop_assert!((0.0..=1.0).contains(&s));
            last = s;
        }
    }

    #[test]
    fn running_maximum_dominates_prefix(v in proptest::collection::vec(0.0f64..1.0, 1..40)) {
        let c = cumulative_max(Array1::from(v.clone()).view());
        prop_assert_eq!(c.to_vec(), prefix_max(&v));
        for i in 1..v.len() {
            prop_assert!(c[i] >= c[i - 1]);
            prop_assert!(c[i] >= v[i]);
        }
    }
}
