mod common;

use common::*;
use lipode::linalg::Matrix;
use lipode::net::{lrelu, MlpParams};
use proptest::prelude::*;
use rand::seq::SliceRandom;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn bias_free_network_is_positively_homogeneous(seed in any::<u64>(), k in -4i32..5) {
        let mut rng = seeded(seed);
        let mut p = random_net(&mut rng);
        for b in &mut p.biases {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        let c = 2f64.powi(k);
        let x = random_matrix(&mut rng, 4, p.input_dim());
        let scaled = x.map(|v| v * c);
        let a = p.predict(&x).unwrap();
        let b = p.predict(&scaled).unwrap();
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert_eq!(u * c, *v);
        }
    }

    #[test]
    fn batch_rows_are_independent(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = seeded(seed);
        let p = random_net(&mut rng);
        let x = random_matrix(&mut rng, n, p.input_dim());
        let out = p.predict(&x).unwrap();
        for i in 0..n {
            let single = p.eval(x.row(i)).unwrap();
            prop_assert_eq!(out.row(i), single.as_slice());
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let shuffled = p.predict(&x.select_rows(&perm)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(shuffled.row(k), out.row(i));
        }
    }

    #[test]
    fn flat_round_trip(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let p = random_net(&mut rng);
        let mut q = MlpParams::<f64>::init(p.sizes(), seed ^ 1).unwrap();
        q.set_flat(&p.to_flat()).unwrap();
        prop_assert_eq!(q.to_flat(), p.to_flat());
        prop_assert_eq!(p.to_flat().len(), p.param_count());
    }
}

#[test]
fn lrelu_examples() {
    assert_eq!(lrelu(2.0, 0.01), 2.0);
    assert_eq!(lrelu(-2.0, 0.01), -0.02);
    assert_eq!(lrelu(0.0, 0.01), 0.0);
}

#[test]
fn single_precision_tracks_double() {
    let p64 = MlpParams::<f64>::init(&[2, 8, 8, 1], 4).unwrap();
    let p32 = MlpParams::<f32>::init(&[2, 8, 8, 1], 4).unwrap();
    let x64 = Matrix::from_rows(&[[0.3, -1.2], [1.5, 0.7]]).unwrap();
    let x32 = Matrix::from_rows(&[[0.3f32, -1.2], [1.5, 0.7]]).unwrap();
    let a = p64.predict(&x64).unwrap();
    let b = p32.predict(&x32).unwrap();
    for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((u - *v as f64).abs() < 1e-5);
    }
}

#[test]
fn shape_errors() {
    let p = MlpParams::<f64>::init(&[2, 3, 1], 0).unwrap();
    assert!(p.eval(&[1.0]).is_err());
    assert!(p.predict(&Matrix::zeros(2, 3)).is_err());
    assert!(MlpParams::<f64>::init(&[2], 0).is_err());
    assert!(MlpParams::<f64>::init(&[2, 0, 1], 0).is_err());
}
