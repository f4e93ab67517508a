mod common;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use expertsim::ml::{EvictionNet, LayerFeatures};

#[test]
fn analytic_gradients_match_finite_differences() {
    let worst = common::gradient_check(20, 3, 1e-4);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn forward_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let e = rng.random_range(2..10);
        let net = EvictionNet::init(e, rng.random_range(1..20), &mut rng);
        let x = Array2::from_shape_fn((3, 2 * e), |_| rng.random_range(0.0..1.0));
        let out = net.forward_batch(&x.view()).unwrap();
        for r in 0..3 {
            let want = common::naive_forward(&net, x.row(r).as_slice().unwrap());
            for (a, b) in out.row(r).iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
            }
            assert_eq!(net.score(x.row(r).as_slice().unwrap()).unwrap(), out.row(r).to_vec());
        }
    }
}

#[test]
fn worked_update_example() {
    let mut f = LayerFeatures::new(8);
    f.update(&[4]);
    assert_eq!(f.recency(4), Some(1));
    assert_eq!(f.frequency(4), 1);
    assert!((0..8).filter(|&e| e != 4).all(|e| f.recency(e).is_none() && f.frequency(e) == 0));
    f.update(&[3]);
    assert_eq!((f.recency(3), f.recency(4)), (Some(1), Some(2)));
    assert_eq!((f.frequency(3), f.frequency(4)), (1, 1));
    let v = f.normalize();
    assert_eq!(&v.recency_norm()[2..5], &[0.0, 1.0, 0.5]);
    assert_eq!(&v.frequency_norm()[2..5], &[0.0, 1.0, 1.0]);
}
