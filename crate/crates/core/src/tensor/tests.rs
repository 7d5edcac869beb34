use super::*;
use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const PRIMITIVE_TOL: f64 = 1e-6;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// Random values bounded away from zero, for kinked ops like relu.
fn random_matrix_off_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let v: f64 = rng.gen_range(0.1..1.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Compare analytic gradients of every input of a scalar-valued graph
/// against central finite differences.
fn check_gradients<F>(inputs: &[Array2<f64>], tol: f64, f: F)
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let root = f(&mut tape, &ids);
    assert_eq!(tape.value(root).dim(), (1, 1), "loss must be scalar");
    tape.backward(root).unwrap();
    let analytic: Vec<Array2<f64>> = ids.iter().map(|&id| tape.grad(id).clone()).collect();

    let eval = |xs: &[Array2<f64>]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = xs.iter().map(|m| tape.leaf(m.clone())).collect();
        let root = f(&mut tape, &ids);
        tape.value(root)[[0, 0]]
    };

    for (k, input) in inputs.iter().enumerate() {
        for (idx, _) in input.indexed_iter() {
            let mut plus = inputs.to_vec();
            plus[k][idx] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k][idx] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            let a = analytic[k][idx];
            let denom = a.abs().max(numeric.abs()).max(1.0);
            let rel = (a - numeric).abs() / denom;
            assert!(
                rel < tol,
                "input {k} at {idx:?}: analytic {a:.12e}, numeric {numeric:.12e}, rel {rel:.3e}"
            );
        }
    }
}

/// Reduce any node to a scalar with a fixed weighting so the full Jacobian
/// is exercised: `sum(out ∘ R)`.
fn weighted_sum(tape: &mut Tape, out: NodeId, weights: &Array2<f64>) -> NodeId {
    let r = tape.leaf(weights.clone());
    let prod = tape.mul(out, r).unwrap();
    tape.sum(prod)
}

#[test]
fn matmul_identity_is_exact() {
    let mut tape = Tape::new();
    let a = tape.leaf(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
    let eye = tape.leaf(Array2::eye(2));
    let out = tape.matmul(a, eye).unwrap();
    assert_eq!(tape.value(out), tape.value(a));
}

#[test]
fn matmul_shape_mismatch_is_an_error() {
    let mut tape = Tape::new();
    let a = tape.leaf(Array2::zeros((2, 3)));
    let b = tape.leaf(Array2::zeros((2, 3)));
    assert!(tape.matmul(a, b).is_err());
}

#[test]
fn add_shape_mismatch_is_an_error() {
    let mut tape = Tape::new();
    let a = tape.leaf(Array2::zeros((2, 3)));
    let b = tape.leaf(Array2::zeros((3, 2)));
    assert!(tape.add(a, b).is_err());
}

#[test]
fn softmax_rows_sum_to_one_and_equal_inputs_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tape = Tape::new();
    let x = tape.leaf(random_matrix(&mut rng, 5, 7));
    let s = tape.softmax_rows(x);
    for sum in row_sums(tape.value(s)) {
        assert!((sum - 1.0).abs() < 1e-12);
    }
    let c = tape.leaf(Array2::from_elem((2, 4), 3.5));
    let s = tape.softmax_rows(c);
    assert!(tape.value(s).iter().all(|&v| (v - 0.25).abs() < 1e-12));
}

#[test]
fn layer_norm_rows_have_zero_mean_unit_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tape = Tape::new();
    // Scale inputs up so eps is negligible against the true variance.
    let x = tape.leaf(random_matrix(&mut rng, 6, 32).mapv(|v| v * 10.0));
    let h = tape.layer_norm_rows(x, 1e-12).unwrap();
    for row in tape.value(h).rows() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9, "row mean {mean}");
        assert!((var - 1.0).abs() < 1e-6, "row variance {var}");
    }
}

#[test]
fn sum_of_leaf_gradient_is_all_ones() {
    let mut tape = Tape::new();
    let w = tape.leaf(Array2::from_elem((3, 4), 2.5));
    let s = tape.sum(w);
    tape.backward(s).unwrap();
    assert!(tape.grad(w).iter().all(|&v| v == 1.0));
}

#[test]
fn zero_scaled_loss_has_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tape = Tape::new();
    let w = tape.leaf(random_matrix(&mut rng, 3, 4));
    let h = tape.sigmoid(w);
    let s = tape.sum(h);
    let z = tape.scale(s, 0.0);
    tape.backward(z).unwrap();
    assert!(tape.grad(w).iter().all(|&v| v == 0.0));
}

#[test]
fn gradients_accumulate_across_backward_calls() {
    let mut tape = Tape::new();
    let w = tape.leaf(Array2::from_elem((2, 2), 1.0));
    let s = tape.sum(w);
    tape.backward(s).unwrap();
    tape.backward(s).unwrap();
    assert!(tape.grad(w).iter().all(|&v| v == 2.0));
    tape.zero_grads();
    assert!(tape.grad(w).iter().all(|&v| v == 0.0));
}

#[test]
fn backward_on_non_scalar_is_an_error() {
    let mut tape = Tape::new();
    let w = tape.leaf(Array2::zeros((2, 2)));
    let err = tape.backward(w).unwrap_err();
    assert!(err.to_string().contains("1x1"), "{err}");
}

#[test]
fn forward_and_backward_are_bit_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut tape = Tape::new();
        let x = tape.leaf(random_matrix(&mut rng, 4, 6));
        let w = tape.leaf(random_matrix(&mut rng, 6, 3));
        let h = tape.matmul(x, w).unwrap();
        let h = tape.softmax_rows(h);
        let h = tape.layer_norm_rows(h, 1e-5).unwrap();
        let s = tape.sum(h);
        tape.backward(s).unwrap();
        (
            tape.value(s).clone(),
            tape.grad(x).clone(),
            tape.grad(w).clone(),
        )
    };
    let (v1, gx1, gw1) = run();
    let (v2, gx2, gw2) = run();
    let bits = |m: &Array2<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&v1), bits(&v2));
    assert_eq!(bits(&gx1), bits(&gx2));
    assert_eq!(bits(&gw1), bits(&gw2));
}

#[test]
fn shift_rows_forward_semantics() {
    let mut tape = Tape::new();
    let x = tape.leaf(array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]);
    let down = tape.shift_rows(x, 1);
    assert_eq!(tape.value(down), &array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
    let up = tape.shift_rows(x, -1);
    assert_eq!(tape.value(up), &array![[2.0, 2.0], [3.0, 3.0], [0.0, 0.0]]);
}

#[test]
fn concat_of_slices_reassembles() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tape = Tape::new();
    let x = tape.leaf(random_matrix(&mut rng, 4, 9));
    let a = tape.slice_cols(x, 0, 3).unwrap();
    let b = tape.slice_cols(x, 3, 4).unwrap();
    let c = tape.slice_cols(x, 7, 2).unwrap();
    let back = tape.concat_cols(&[a, b, c]).unwrap();
    assert_eq!(tape.value(back), tape.value(x));
}

#[test]
fn sinusoidal_table_starts_with_alternating_zero_one() {
    let t = sinusoidal_table(3, 4);
    assert_eq!(t.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
    assert!(t.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    assert_ne!(t.row(1), t.row(2));
}

#[test]
fn dropout_zero_rate_is_identity_and_masks_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tape = Tape::new();
    let x = tape.leaf(Array2::from_elem((8, 8), 1.0));
    let same = tape.dropout(x, 0.0, &mut rng).unwrap();
    assert_eq!(same, x);
    let dropped = tape.dropout(x, 0.5, &mut rng).unwrap();
    // Survivors are scaled by 1/(1-rate); the rest are zero.
    assert!(tape.value(dropped).iter().all(|&v| v == 0.0 || (v - 2.0).abs() < 1e-12));
    let n_kept = tape.value(dropped).iter().filter(|&&v| v != 0.0).count();
    assert!(n_kept > 8 && n_kept < 56, "suspicious keep count {n_kept}");
}

// ───────────────────────── gradient checks ─────────────────────────

#[test]
fn grad_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let r = random_matrix(&mut rng, 4, 3);
    let inputs = vec![random_matrix(&mut rng, 4, 5), random_matrix(&mut rng, 5, 3)];
    check_gradients(&inputs, PRIMITIVE_TOL, |tape, ids| {
        let out = tape.matmul(ids[0], ids[1]).unwrap();
        weighted_sum(tape, out, &r)
    });
}

#[test]
fn grad_add_and_mul() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = random_matrix(&mut rng, 4, 5);
    let inputs = vec![random_matrix(&mut rng, 4, 5), random_matrix(&mut rng, 4, 5)];
    check_gradients(&inputs, PRIMITIVE_TOL, |tape, ids| {
        let s = tape.add(ids[0], ids[1]).unwrap();
        let m = tape.mul(s, ids[1]).unwrap();
        weighted_sum(tape, m, &r)
    });
}

#[test]
fn grad_row_broadcasts() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let r = random_matrix(&mut rng, 4, 5);
    let inputs = vec![random_matrix(&mut rng, 4, 5), random_matrix(&mut rng, 1, 5), random_matrix(&mut rng, 1, 5)];
    check_gradients(&inputs, PRIMITIVE_TOL, |tape, ids| {
        let a = tape.add_row(ids[0], ids[1]).unwrap();
        let m = tape.mul_row(a, ids[2]).unwrap();
        weighted_sum(tape, m, &r)
    });
}

#[test]
fn grad_affine_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let r = random_matrix(&mut rng, 4, 5);
    let inputs = vec![random_matrix(&mut rng, 4, 5)];
    check_gradients(&inputs, PRIMITIVE_TOL, |tape, ids| {
        let out = tape.affine(ids[0], 2.3, -0.7);
        weighted_sum(tape, out, &r)
    });
}

#[test]
fn grad_concat_and_slices() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let r = random_matrix(&mut rng, 3, 6);
    let inputs = vec![random_matrix(&mut rng, 3, 2), random_matrix(&mut rng, 3, 4)];
    check_gradients(&inputs, PRIMITIVE_TOL, |tape, ids| {
        let cat = tape.concat_cols(&[ids[0], ids[1]]).unwrap();
        let left = tape.slice_cols(cat, 0, 3).unwrap();
        let right = tape.slice_cols(cat, 3, 3).unwrap();
        let cat2 = tape.concat_cols(&[right, left]).unwrap();
        weighted_sum(tape, cat2, &r)
    });
}

#[test]
fn grad_slice_rows_and_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let r_top = random_matrix(&mut rng, 3, 4);
    let r_bottom = random_matrix(&mut rng, 2, 4);
    let inputs = vec![random_matrix(&mut rng, 5, 4)];
    for offset in [-2isize, -1, 1, 2] {
        check_gradients(&inputs, PRIMITIVE_TOL, |tape, ids| {
            let shifted = tape.shift_rows(ids[0], offset);
            let top = tape.slice_rows(shifted, 0, 3).unwrap();
            let bottom = tape.slice_rows(shifted, 3, 2).unwrap();
            let sum_top = weighted_sum(tape, top, &r_top);
            let sum_bottom = weighted_sum(tape, bottom, &r_bottom);
            tape.add(sum_top, sum_bottom).unwrap()
        });
    }
}

#[test]
fn grad_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let r = random_matrix(&mut rng, 5, 4);
    let inputs = vec![random_matrix(&mut rng, 4, 5)];
    check_gradients(&inputs, PRIMITIVE_TOL, |tape, ids| {
        let t = tape.transpose(ids[0]);
        weighted_sum(tape, t, &r)
    });
}

#[test]
fn grad_softmax_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let r = random_matrix(&mut rng, 4, 5);
    let inputs = vec![random_matrix(&mut rng, 4, 5)];
    check_gradients(&inputs, PRIMITIVE_TOL, |tape, ids| {
        let s = tape.softmax_rows(ids[0]);
        weighted_sum(tape, s, &r)
    });
}

#[test]
fn grad_layer_norm_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let r = random_matrix(&mut rng, 4, 5);
    let inputs = vec![random_matrix(&mut rng, 4, 5)];
    check_gradients(&inputs, PRIMITIVE_TOL, |tape, ids| {
        let h = tape.layer_norm_rows(ids[0], 1e-5).unwrap();
        weighted_sum(tape, h, &r)
    });
}

#[test]
fn grad_activations() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let r = random_matrix(&mut rng, 4, 5);
    let inputs = vec![random_matrix_off_zero(&mut rng, 4, 5)];
    check_gradients(&inputs, PRIMITIVE_TOL, |tape, ids| {
        let a = tape.relu(ids[0]);
        let b = tape.sigmoid(a);
        let c = tape.tanh(b);
        weighted_sum(tape, c, &r)
    });
}

#[test]
fn grad_mean_rows_and_mean_scalars() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let r = random_matrix(&mut rng, 1, 5);
    let inputs = vec![random_matrix(&mut rng, 4, 5), random_matrix(&mut rng, 4, 5)];
    check_gradients(&inputs, PRIMITIVE_TOL, |tape, ids| {
        let m0 = tape.mean_rows(ids[0]);
        let m1 = tape.mean_rows(ids[1]);
        let s0 = weighted_sum(tape, m0, &r);
        let s1 = weighted_sum(tape, m1, &r);
        tape.mean_scalars(&[s0, s1]).unwrap()
    });
}

#[test]
fn grad_dropout_with_fixed_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let r = random_matrix(&mut rng, 4, 5);
    let inputs = vec![random_matrix(&mut rng, 4, 5)];
    // The mask rng is re-seeded per tape so finite differences see the
    // same mask the analytic pass used.
    check_gradients(&inputs, PRIMITIVE_TOL, |tape, ids| {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(777);
        let d = tape.dropout(ids[0], 0.3, &mut mask_rng).unwrap();
        weighted_sum(tape, d, &r)
    });
}

#[test]
fn grad_bce_from_probs() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let y = Array2::from_shape_fn((1, 10), |_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 });
    let inputs = vec![random_matrix(&mut rng, 1, 10)];
    let targets = y.clone();
    check_gradients(&inputs, PRIMITIVE_TOL, move |tape, ids| {
        let p = tape.sigmoid(ids[0]);
        tape.bce_from_probs(p, targets.clone(), 1e-7).unwrap()
    });
}

#[test]
fn grad_mixed_chain_composite() {
    // A deeper composite touching most ops at once; looser tolerance.
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let y = Array2::from_shape_fn((1, 4), |_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
    let inputs = vec![
        random_matrix(&mut rng, 5, 6),
        random_matrix(&mut rng, 6, 4),
        random_matrix(&mut rng, 1, 4),
    ];
    let targets = y.clone();
    check_gradients(&inputs, 1e-4, move |tape, ids| {
        let h = tape.matmul(ids[0], ids[1]).unwrap();
        let h = tape.add_row(h, ids[2]).unwrap();
        let h = tape.layer_norm_rows(h, 1e-5).unwrap();
        let a = tape.softmax_rows(h);
        let h = tape.mul(a, h).unwrap();
        let pooled = tape.mean_rows(h);
        let p = tape.sigmoid(pooled);
        tape.bce_from_probs(p, targets.clone(), 1e-7).unwrap()
    });
}
