use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn store_with(weight: Array2<f64>, bias: Array2<f64>) -> (ParamStore, Dense) {
    let mut store = ParamStore::new();
    let (out_dim, in_dim) = weight.dim();
    let w = store.add("w", weight);
    let b = store.add("b", bias);
    (
        store,
        Dense {
            weight: w,
            bias: b,
            in_dim,
            out_dim,
        },
    )
}

#[test]
fn dense_identity_and_zero_weights() {
    let (store, layer) = store_with(Array2::eye(2), Array2::zeros((1, 2)));
    assert_eq!(layer.forward(&store, &[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);

    let (store, layer) = store_with(Array2::zeros((2, 2)), array![[5.0, 5.0]]);
    assert_eq!(layer.forward(&store, &[0.3, -7.0]).unwrap(), vec![5.0, 5.0]);
}

#[test]
fn dense_hand_multiply() {
    let (store, layer) = store_with(array![[1.0, 2.0], [3.0, 4.0]], array![[0.0, 1.0]]);
    assert_eq!(layer.forward(&store, &[1.0, 1.0]).unwrap(), vec![3.0, 8.0]);
}

#[test]
fn dense_rejects_wrong_input_length() {
    let (store, layer) = store_with(Array2::eye(2), Array2::zeros((1, 2)));
    assert!(matches!(
        layer.forward(&store, &[1.0, 2.0, 3.0]),
        Err(NnError::DimensionMismatch { .. })
    ));
}

fn zero_gru(input: usize, hidden: usize) -> (ParamStore, GruCell) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let cell = GruCell::new(&mut store, "gru", input, hidden, &mut rng);
    store.fill(0.0);
    (store, cell)
}

#[test]
fn gru_zero_params_halves_state() {
    let (store, cell) = zero_gru(3, 2);
    let out = cell.step(&store, &[1.0, 1.0], &[0.2, -4.0, 9.0]).unwrap();
    assert_eq!(out, vec![0.5, 0.5]);
    let out = cell.step(&store, &[0.0, 0.0], &[0.2, -4.0, 9.0]).unwrap();
    assert_eq!(out, vec![0.0, 0.0]);
}

#[test]
fn gru_rejects_dimension_mismatch() {
    let (store, cell) = zero_gru(3, 2);
    assert!(cell.step(&store, &[1.0, 1.0, 1.0], &[0.0; 3]).is_err());
    assert!(cell.step(&store, &[1.0, 1.0], &[0.0; 2]).is_err());
}

proptest! {
    #[test]
    fn gru_keeps_state_in_unit_box(
        seed in any::<u64>(),
        scale in 0.1f64..5.0,
        h in prop::collection::vec(-1.0f64..=1.0, 4),
        x in prop::collection::vec(-10.0f64..10.0, 3),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng);
        for p in store.iter_mut() {
            p.value.mapv_inplace(|v| v * scale);
        }
        let out = cell.step(&store, &h, &x).unwrap();
        prop_assert!(out.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn dense_is_linear_without_bias(
        seed in any::<u64>(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        x in prop::collection::vec(-5.0f64..5.0, 5),
        y in prop::collection::vec(-5.0f64..5.0, 5),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layer = Dense::new(&mut store, "d", 5, 4, &mut rng);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
        let lhs = layer.forward(&store, &mix).unwrap();
        let fx = layer.forward(&store, &x).unwrap();
        let fy = layer.forward(&store, &y).unwrap();
        for (l, (fx, fy)) in lhs.iter().zip(fx.iter().zip(&fy)) {
            let rhs = a * fx + b * fy;
            let scale = (a * fx).abs() + (b * fy).abs() + 1e-300;
            prop_assert!((l - rhs).abs() <= 1e-12 * scale.max(1.0));
        }
    }
}

#[test]
fn backward_of_sum_of_linear_map_is_input() {
    let mut store = ParamStore::new();
    let w = store.add("w", array![[0.3, -0.2, 0.5], [1.0, 2.0, -1.5]]);
    let x = array![[0.7, -1.1, 2.5]];
    let mut tape = Tape::new(&store);
    let xn = tape.input(x.clone());
    let y = tape.affine(xn, w, None).unwrap();
    let loss = tape.sum(y);
    let grads = tape.backward(loss).unwrap();
    for i in 0..2 {
        for j in 0..3 {
            assert_eq!(grads.params.get(w)[[i, j]], x[[0, j]]);
        }
    }
}

#[test]
fn unused_parameter_has_exactly_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let used = Dense::new(&mut store, "used", 3, 2, &mut rng);
    let unused = Dense::new(&mut store, "unused", 3, 2, &mut rng);
    let mut tape = Tape::new(&store);
    let x = tape.input(array![[1.0, 2.0, 3.0]]);
    let y = used.record(&mut tape, x).unwrap();
    let y = tape.tanh(y);
    let loss = tape.sum(y);
    let grads = tape.backward(loss).unwrap();
    assert!(grads.params.get(unused.weight).iter().all(|&g| g == 0.0));
    assert!(grads.params.get(unused.bias).iter().all(|&g| g == 0.0));
    assert!(grads.params.get(used.weight).iter().any(|&g| g != 0.0));
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.input(Array2::zeros((2, 2)));
    assert_eq!(tape.backward(x).unwrap_err(), NnError::NotScalar((2, 2)));
}

#[test]
fn backward_is_repeatable() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "mlp", (4, 6, 3), Activation::Identity, &mut rng);
    let mut tape = Tape::new(&store);
    let x = tape.input(array![[0.1, 0.2, -0.3, 0.9], [1.0, -1.0, 0.5, 0.0]]);
    let y = mlp.record(&mut tape, x).unwrap();
    let loss = tape.mean_squared_to(y, Array2::ones((2, 3))).unwrap();
    let a = tape.backward(loss).unwrap();
    let b = tape.backward(loss).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.node(x), b.node(x));
}

#[test]
fn input_gradient_matches_central_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "mlp", (3, 5, 2), Activation::Tanh, &mut rng);
    let x0 = array![[0.4, -0.7, 1.3]];
    let eval = |x: &Array2<f64>| {
        let mut tape = Tape::new(&store);
        let xn = tape.input(x.clone());
        let y = mlp.record(&mut tape, xn).unwrap();
        let l = tape.sum(y);
        (tape.value(l)[[0, 0]], tape.backward(l).unwrap().node(xn).unwrap().clone())
    };
    let (_, analytic) = eval(&x0);
    for j in 0..3 {
        let mut plus = x0.clone();
        plus[[0, j]] += 1e-6;
        let mut minus = x0.clone();
        minus[[0, j]] -= 1e-6;
        let numeric = (eval(&plus).0 - eval(&minus).0) / 2e-6;
        assert!((numeric - analytic[[0, j]]).abs() < 1e-8);
    }
}

fn mlp_loss(mlp: Mlp, x: Array2<f64>, target: Array2<f64>) -> impl Fn(&ParamStore) -> Result<(f64, Grads), NnError> {
    move |store: &ParamStore| {
        let mut tape = Tape::new(store);
        let xn = tape.input(x.clone());
        let y = mlp.record(&mut tape, xn)?;
        let loss = tape.mean_squared_to(y, target.clone())?;
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss)[[0, 0]], grads.params))
    }
}

#[test]
fn gradient_check_linear_layer_is_exact_to_rounding() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, "lin", 4, 3, &mut rng);
    let x = array![[0.5, -1.0, 2.0, 0.1], [1.5, 0.3, -0.2, -0.9]];
    let loss = move |store: &ParamStore| {
        let mut tape = Tape::new(store);
        let xn = tape.input(x.clone());
        let y = layer.record(&mut tape, xn)?;
        let l = tape.sum(y);
        let g = tape.backward(l)?;
        Ok((tape.value(l)[[0, 0]], g.params))
    };
    for eps in [1e-7, 1e-5, 1e-3] {
        let err = finite_diff_check(&mut store, eps, loss.clone()).unwrap();
        assert!(err < 1e-7, "eps {eps}: {err}");
    }
}

#[test]
fn gradient_check_two_layer_tanh() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "mlp", (5, 8, 3), Activation::Identity, &mut rng);
    for p in store.iter_mut() {
        p.value.mapv_inplace(|v| v + 0.1);
    }
    let x = Array2::from_shape_fn((3, 5), |(i, j)| ((i * 5 + j) as f64 * 0.37).sin());
    let target = Array2::from_shape_fn((3, 3), |(i, j)| (i as f64 - j as f64) * 0.4);
    let err = finite_diff_check(&mut store, 1e-5, mlp_loss(mlp, x, target)).unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn gradient_check_gru_three_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng);
    for p in store.iter_mut() {
        p.value.mapv_inplace(|v| v + 0.05);
    }
    let xs: Vec<Array2<f64>> = (0..3)
        .map(|t| Array2::from_shape_fn((2, 3), |(i, j)| ((t * 7 + i * 3 + j) as f64).cos()))
        .collect();
    let target = Array2::from_elem((2, 4), 0.25);
    let err = finite_diff_check(&mut store, 1e-5, |store| {
        let mut tape = Tape::new(store);
        let mut h = tape.input(Array2::from_elem((2, 4), 0.1));
        for x in &xs {
            let xn = tape.input(x.clone());
            h = cell.record(&mut tape, h, xn)?;
        }
        let l = tape.mean_squared_to(h, target.clone())?;
        let g = tape.backward(l)?;
        Ok((tape.value(l)[[0, 0]], g.params))
    })
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn gradient_check_gather_and_weighted_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "q", (4, 6, 5), Activation::Identity, &mut rng);
    let x = Array2::from_shape_fn((3, 4), |(i, j)| (i as f64 + 1.0) * 0.2 - j as f64 * 0.3);
    let err = finite_diff_check(&mut store, 1e-5, |store| {
        let mut tape = Tape::new(store);
        let xn = tape.input(x.clone());
        let q = mlp.record(&mut tape, xn)?;
        let picked = tape.gather(q, &[4, 0, 2])?;
        let a = tape.mean_squared_to(picked, Array2::from_elem((3, 1), 1.5))?;
        let b = tape.sum(q);
        let l = tape.weighted_sum(&[(a, 2.0), (b, -0.5)])?;
        let g = tape.backward(l)?;
        Ok((tape.value(l)[[0, 0]], g.params))
    })
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

fn scalar_store(theta: &[f64]) -> ParamStore {
    let mut store = ParamStore::new();
    store.add("theta", Array2::from_shape_vec((1, theta.len()), theta.to_vec()).unwrap());
    store
}

fn grads_of(store: &ParamStore, g: &[f64]) -> Grads {
    let mut grads = store.zero_grads();
    grads
        .get_mut(store.ids().next().unwrap())
        .as_slice_mut()
        .unwrap()
        .copy_from_slice(g);
    grads
}

#[test]
fn adam_single_step_by_hand() {
    let mut store = scalar_store(&[1.0]);
    let mut adam = Adam::new(&store, AdamConfig::with_lr(1e-3));
    let g = grads_of(&store, &[2.0]);
    adam.update(&mut store, &g).unwrap();
    assert_eq!(adam.step, 1);
    // m̂ = 2, v̂ = 4  =>  θ' = 1 − 1e-3 · 2 / (2 + 1e-8)
    let expected = 1.0 - 1e-3 * 2.0 / (2.0 + 1e-8);
    assert!((store.iter().next().unwrap().value[[0, 0]] - expected).abs() < 1e-15);
    assert!((expected - 0.999).abs() < 1e-10);
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut store = scalar_store(&[0.7, -2.0]);
    let mut adam = Adam::new(&store, AdamConfig::with_lr(1e-2));
    let g = grads_of(&store, &[0.0, 0.0]);
    adam.update(&mut store, &g).unwrap();
    assert_eq!(store.iter().next().unwrap().value, array![[0.7, -2.0]]);
}

#[test]
fn adam_equal_gradients_give_equal_updates_and_is_deterministic() {
    let mut a = scalar_store(&[0.5, 0.5]);
    let mut adam_a = Adam::new(&a, AdamConfig::with_lr(1e-3));
    let mut b = a.clone();
    let mut adam_b = adam_a.clone();
    for step in 0..5 {
        let g = grads_of(&a, &[0.3 * step as f64 - 0.4, 0.3 * step as f64 - 0.4]);
        adam_a.update(&mut a, &g).unwrap();
        adam_b.update(&mut b, &g).unwrap();
    }
    let v = &a.iter().next().unwrap().value;
    assert_eq!(v[[0, 0]].to_bits(), v[[0, 1]].to_bits());
    assert_eq!(a, b);
    assert_eq!(adam_a, adam_b);
    assert!(adam_a.moments_finite() && adam_a.second_moments_nonnegative());
}

#[test]
fn adam_reports_offending_parameter() {
    let mut store = ParamStore::new();
    store.add("ok", Array2::zeros((1, 2)));
    store.add("layer.bias", Array2::zeros((1, 2)));
    let mut adam = Adam::new(&store, AdamConfig::with_lr(1e-3));
    let mut g = store.zero_grads();
    g.get_mut(ParamId(1))[[0, 1]] = f64::NAN;
    let before = store.clone();
    assert_eq!(
        adam.update(&mut store, &g),
        Err(NnError::NonFiniteGradient("layer.bias".into()))
    );
    assert_eq!(store, before);
    assert_eq!(adam.step, 0);
}

#[test]
fn init_respects_fan_in_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, "d", 16, 8, &mut rng);
    let bound = 1.0 / 4.0;
    assert!(store.get(layer.weight).iter().all(|v| v.abs() <= bound));
    assert!(store.get(layer.bias).iter().all(|&v| v == 0.0));
    assert_eq!(store.get(layer.weight).dim(), (8, 16));
}
