mod common;

use common::*;
use lipode::linalg::Matrix;
use lipode::lipreg::{estimate_lipschitz, ProbeSet};
use lipode::net::MlpParams;
use proptest::prelude::*;
use rand::Rng;

fn affine_net(w: Matrix<f64>, rng: &mut rand_chacha::ChaCha8Rng) -> MlpParams<f64> {
    let b = (0..w.rows()).map(|_| rng.random_range(-1.0..1.0)).collect();
    MlpParams::from_layers(vec![w], vec![b], 0.01).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn affine_estimate_is_bounded_by_spectral_norm(seed in any::<u64>(), n_in in 1usize..6, n_out in 1usize..6) {
        let mut rng = seeded(seed);
        let w = random_matrix(&mut rng, n_out, n_in);
        let (sigma, v) = top_singular(&w);
        let p = affine_net(w, &mut rng);
        let pts = random_matrix(&mut rng, 30, n_in);
        let probes = ProbeSet::new(pts.clone(), 0).unwrap();
        let est = estimate_lipschitz(&p, &probes).unwrap();
        prop_assert!(est.value <= sigma + 1e-9);

        // a pair along the top right singular vector attains the bound
        let base = pts.row(0).to_vec();
        let shifted: Vec<f64> = base.iter().zip(&v).map(|(a, b)| a + 0.7 * b).collect();
        let injected = probes.extended(&Matrix::from_rows(&[shifted]).unwrap()).unwrap();
        let est2 = estimate_lipschitz(&p, &injected).unwrap();
        prop_assert!((est2.value - sigma).abs() < 1e-9);
    }

    #[test]
    fn estimate_grows_with_the_probe_set(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let p = random_net(&mut rng);
        let all = random_matrix(&mut rng, 40, p.input_dim());
        let mut prev = f64::NEG_INFINITY;
        for n in [2usize, 5, 10, 20, 40] {
            let idx: Vec<usize> = (0..n).collect();
            let Ok(s) = ProbeSet::new(all.select_rows(&idx), 0) else { continue };
            let e = estimate_lipschitz(&p, &s).unwrap().value;
            prop_assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn estimate_is_a_lower_bound_on_local_slopes(seed in any::<u64>()) {
        // every probed pair's quotient is at most the estimate
        let mut rng = seeded(seed);
        let p = random_net(&mut rng);
        let pts = random_matrix(&mut rng, 12, p.input_dim());
        let s = ProbeSet::new(pts, 0).unwrap();
        let est = estimate_lipschitz(&p, &s).unwrap();
        let out = p.predict(s.points()).unwrap();
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                let q = lipode::linalg::dist2(out.row(a), out.row(b)) / lipode::linalg::dist2(s.point(a), s.point(b));
                prop_assert!(q <= est.value);
            }
        }
    }
}
