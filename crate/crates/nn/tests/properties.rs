use citf_nn::layers::{GroupNorm, LayerNorm, Linear};
use citf_nn::{ParamStore, Tape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-30.0..30.0f64, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(x in matrix(4, 6)) {
        let mut t = Tape::detached();
        let v = t.constant(x);
        let s = t.softmax_rows(v);
        for r in 0..4 {
            let row = t.value(s).row(r);
            prop_assert!(row.iter().all(|&p| p > 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn norms_ignore_additive_shift(x in matrix(3, 8), shift in -100.0..100.0f64) {
        let mut store = ParamStore::new();
        let ln = LayerNorm::new(&mut store, "ln", 8);
        let gn = GroupNorm::new(&mut store, "gn", 8, 4).unwrap();
        let shifted = x.map(|v| v + shift);
        let mut t = Tape::new(&store);
        let (a, b) = (t.constant(x), t.constant(shifted));
        let (la, lb) = (ln.forward(&mut t, a).unwrap(), ln.forward(&mut t, b).unwrap());
        let (ga, gb) = (gn.forward(&mut t, a).unwrap(), gn.forward(&mut t, b).unwrap());
        prop_assert!(t.value(la).max_abs_diff(t.value(lb)) <= 1e-9);
        prop_assert!(t.value(ga).max_abs_diff(t.value(gb)) <= 1e-9);
    }
}

#[test]
fn initialization_is_seed_deterministic() {
    let build = |seed| {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Linear::new(&mut store, "a", 5, 7, true, &mut rng);
        Linear::new(&mut store, "b", 7, 3, false, &mut rng);
        store
    };
    assert_eq!(build(3), build(3));
    assert_ne!(build(3), build(4));
    let store = build(3);
    let limit = (6.0f64 / 12.0).sqrt();
    let w = store.value(store.find("a.weight").unwrap());
    assert!(w.data().iter().all(|v| v.abs() <= limit));
    assert!(store.value(store.find("a.bias").unwrap()).data().iter().all(|&v| v == 0.0));
}
