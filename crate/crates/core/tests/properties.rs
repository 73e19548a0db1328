use proptest::prelude::*;
use rsl_core::backprop::{backward_jacobians, forward_jacobians};
use rsl_core::diagnostics::{decompose_trend_noise, relu_fold, table1_norms, Component};
use rsl_core::forward::{cte, forward_hidden, q_field, Activation};
use rsl_core::limits::strong_error;
use rsl_core::linalg::{Mat, Tensor4, Vector};
use rsl_core::processes::{covariance_tensors, ItoSpec, StepSize, WeightTensor};
use rsl_core::rng::{normal, stream, StreamRng, Substream};

fn gauss_mat(r: &mut StreamRng, d: usize, s: f64) -> Mat {
    Mat::from_fn(d, d, |_, _| s * normal(r))
}

fn gauss_vec(r: &mut StreamRng, d: usize, s: f64) -> Vector {
    Vector::from_fn(d, |_, _| s * normal(r))
}

fn random_tensor(seed: u64, l: usize, d: usize, per_layer: bool) -> WeightTensor {
    let mut r = stream(seed, Substream::Aux, 0);
    let s = 1.0 / (l as f64).sqrt();
    let a = (0..l).map(|_| gauss_mat(&mut r, d, s)).collect();
    let b = (0..l).map(|_| gauss_vec(&mut r, d, s)).collect();
    let step = if per_layer {
        StepSize::PerLayer((0..l).map(|_| 2.0 * normal(&mut r)).collect())
    } else {
        StepSize::Exponent(0.5)
    };
    WeightTensor::new(a, b, step).unwrap()
}

fn random_q(seed: u64, d: usize) -> (Tensor4, Mat) {
    let mut r = stream(seed, Substream::Aux, 1);
    let qa = Tensor4::from_fn(d, |_, _, _, _| normal(&mut r));
    let qb = gauss_mat(&mut r, d, 1.0);
    (qa, qb)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_is_pair_symmetric_and_psd(seed in any::<u64>(), d in 1usize..4) {
        let (qa, qb) = random_q(seed, d);
        let spec = ItoSpec::constant(Mat::zeros(d, d), Vector::zeros(d), qa, qb).unwrap();
        let (sa, sb) = covariance_tensors(&spec, 0.5);
        for i in 0..d { for j in 0..d { for k in 0..d { for l in 0..d {
            prop_assert!((sa.get(i, j, k, l) - sa.get(k, l, i, j)).abs() < 1e-12);
        }}}}
        prop_assert!(sa.is_psd(1e-9));
        prop_assert!((&sb - sb.transpose()).norm() < 1e-12);
        prop_assert!(sb.symmetric_eigenvalues().iter().all(|e| *e >= -1e-9));
        prop_assert!(spec.check_bound(4).is_ok());
    }

    #[test]
    fn q_field_matches_index_loops(seed in any::<u64>(), d in 1usize..5) {
        let (qa, qb) = random_q(seed, d);
        let spec = ItoSpec::constant(Mat::zeros(d, d), Vector::zeros(d), qa, qb).unwrap();
        let (sa, sb) = covariance_tensors(&spec, 0.0);
        let mut r = stream(seed, Substream::Aux, 2);
        let x = gauss_vec(&mut r, d, 1.0);
        let q = q_field(&sa, &sb, &x);
        // flattened pair index (i, j) ↦ i·d + j
        let pm = sa.pair_matrix();
        for i in 0..d {
            let mut brute = sb[(i, i)];
            for j in 0..d {
                for k in 0..d {
                    brute += x[j] * x[k] * pm[(i * d + j, i * d + k)];
                }
            }
            prop_assert!(rel(q[i], brute) < 1e-12 || (q[i] - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_fold_preserves_trajectories(seed in any::<u64>(), l in 1usize..30, d in 1usize..5) {
        let w = random_tensor(seed, l, d, true);
        let folded = relu_fold(&w).unwrap();
        let mut r = stream(seed, Substream::Aux, 3);
        let x = gauss_vec(&mut r, d, 1.0);
        let act = Activation::relu();
        let h1 = forward_hidden(&x, &w, &act).unwrap();
        let h2 = forward_hidden(&x, &folded, &act).unwrap();
        for (a, b) in h1.states().iter().zip(h2.states()) {
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn cte_agrees_with_states_on_grid(seed in any::<u64>(), l in 1usize..64) {
        let w = random_tensor(seed, l, 2, false);
        let h = forward_hidden(&Vector::from_vec(vec![0.3, -0.2]), &w, &Activation::tanh()).unwrap();
        for k in 0..=l {
            prop_assert_eq!(cte(&h, k as f64 / l as f64), h.state(k));
        }
        prop_assert_eq!(cte(&h, 0.0), h.first());
        prop_assert_eq!(cte(&h, 1.0), h.last());
    }

    #[test]
    fn table1_matches_brute_force(seed in any::<u64>(), l in 2usize..40, d in 1usize..4, beta in 0.0f64..1.0) {
        let w = random_tensor(seed, l, d, false);
        let t = table1_norms(&w, beta, Component::A);
        let fro = |m: &Mat| {
            let mut s = 0.0;
            for i in 0..d { for j in 0..d { s += m[(i, j)] * m[(i, j)]; } }
            s.sqrt()
        };
        let mut max: f64 = 0.0;
        let mut sq = 0.0;
        let mut sum = Mat::zeros(d, d);
        let mut inc: f64 = 0.0;
        for k in 0..l {
            let n = fro(&w.a()[k]);
            max = max.max(n);
            sq += n * n;
            sum += &w.a()[k];
            if k + 1 < l {
                inc = inc.max(fro(&(&w.a()[k + 1] - &w.a()[k])));
            }
        }
        prop_assert!(rel(t.max_norm, max) < 1e-14);
        prop_assert!(rel(t.cumsum_norm, fro(&sum)) < 1e-12);
        prop_assert!(rel(t.rss, sq.sqrt()) < 1e-14);
        prop_assert!(rel(t.scaled_increment_norm, (l as f64).powf(beta) * inc) < 1e-14);
    }

    #[test]
    fn trend_noise_reconstruction(seed in any::<u64>(), l in 1usize..80, bins_frac in 0.0f64..1.0, beta in 0.0f64..1.0) {
        let w = random_tensor(seed, l, 2, false);
        let bins = 1 + ((l - 1) as f64 * bins_frac) as usize;
        let dec = decompose_trend_noise(&w, beta, bins, Component::A).unwrap();
        prop_assert_eq!(dec.noise.len(), l + 1);
        for k in 0..l {
            let diff = (dec.reconstruct(k) - &w.a()[k]).norm();
            prop_assert!(diff <= 1e-12 * (1.0 + w.a()[k].norm()), "k {} diff {}", k, diff);
        }
    }

    #[test]
    fn jacobian_chain_identity(seed in any::<u64>(), l in 1usize..50, d in 1usize..6) {
        let w = random_tensor(seed, l, d, seed % 2 == 0);
        let mut r = stream(seed, Substream::Aux, 4);
        let x = gauss_vec(&mut r, d, 1.0);
        let act = Activation::tanh();
        let h = forward_hidden(&x, &w, &act).unwrap();
        let g = backward_jacobians(&w, &h, &act).unwrap();
        let j = forward_jacobians(&w, &h, &act).unwrap();
        let g0 = g.mat(0);
        prop_assert_eq!(g.mat(l), &Mat::identity(d, d));
        prop_assert_eq!(j.mat(0), &Mat::identity(d, d));
        for k in 0..=l {
            let prod = g.mat(k) * j.mat(k);
            prop_assert!((&prod - g0).norm() <= 1e-10 * g0.norm(), "k {}", k);
        }
    }

    #[test]
    fn strong_error_is_the_grid_maximum(seed in any::<u64>(), l in 1usize..20, s in 1usize..5) {
        let mut r = stream(seed, Substream::Aux, 5);
        let fine: Vec<Vector> = (0..=l * s).map(|_| gauss_vec(&mut r, 2, 1.0)).collect();
        let coarse: Vec<Vector> = (0..=l).map(|_| gauss_vec(&mut r, 2, 1.0)).collect();
        let reference = rsl_core::forward::Trajectory::new(fine.clone()).unwrap();
        let approx = rsl_core::forward::Trajectory::new(coarse.clone()).unwrap();
        let mut brute: f64 = 0.0;
        for k in 0..=l {
            let diff = &fine[k * s] - &coarse[k];
            brute = brute.max((diff[0] * diff[0] + diff[1] * diff[1]).sqrt());
        }
        prop_assert!(rel(strong_error(&reference, &approx).unwrap(), brute) < 1e-14);
    }
}

#[test]
fn strong_error_of_a_shift_is_its_norm() {
    let states: Vec<Vector> = (0..=8)
        .map(|k| Vector::from_vec(vec![k as f64, 1.0]))
        .collect();
    let v = Vector::from_vec(vec![3.0, -4.0]);
    let shifted: Vec<Vector> = states.iter().map(|s| s + &v).collect();
    let a = rsl_core::forward::Trajectory::new(states).unwrap();
    let b = rsl_core::forward::Trajectory::new(shifted).unwrap();
    assert!((strong_error(&a, &b).unwrap() - 5.0).abs() < 1e-14);
    assert_eq!(strong_error(&a, &a).unwrap(), 0.0);
}
