use proptest::prelude::*;
use wordreg::embeddings::{load_vec, save_vec, synth_pair, EmbeddingSpace, Planted, SynthKind};
use wordreg::numerics::Mat;

#[test]
fn planted_nearest_neighbour_recovers_gold() {
    let pair = synth_pair(1000, 20, 0.01, 5, SynthKind::Orthogonal, 10).unwrap();
    let Planted::Orthogonal(q) = &pair.planted else {
        unreachable!()
    };
    let mapped = q.apply(pair.source.matrix());
    let target = pair.target.matrix();
    let mut hits = 0;
    for i in 0..mapped.nrows() {
        let mut best = (f64::INFINITY, 0);
        for j in 0..target.nrows() {
            let d = (mapped.row(i) - target.row(j)).norm_squared();
            if d < best.0 {
                best = (d, j);
            }
        }
        hits += usize::from(best.1 == pair.gold[i]);
    }
    assert!(hits as f64 / 1000.0 >= 0.99, "{hits}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn save_load_round_trip(
        values in prop::collection::vec(-1e3f64..1e3, 12),
        precision in 1usize..10,
    ) {
        let vocab: Vec<String> = ["a", "bé", "c_d"].iter().map(|s| s.to_string()).collect();
        let space = EmbeddingSpace::new(vocab.clone(), Mat::from_row_slice(3, 4, &values)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.vec");
        save_vec(&space, &path, precision).unwrap();
        let back = load_vec(&path, usize::MAX).unwrap().space;
        prop_assert_eq!(back.vocab(), &vocab[..]);
        let err = (back.matrix() - space.matrix()).amax();
        prop_assert!(err <= 10f64.powi(-(precision as i32)));
    }

    #[test]
    fn full_precision_is_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 6)) {
        let space = EmbeddingSpace::new(vec!["x".into(), "y".into()], Mat::from_row_slice(2, 3, &values)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.vec");
        save_vec(&space, &path, 17).unwrap();
        let back = load_vec(&path, usize::MAX).unwrap().space;
        prop_assert_eq!(back.matrix(), space.matrix());
    }
}
