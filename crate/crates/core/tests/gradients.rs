//! Full-model finite-difference checks for every head.

use tiedheads::heads::score_backward;
use tiedheads::trainer::{gradient_check, generate_batch, GradCheckConfig, ModelShape, Task, ToyModel};
use tiedheads::{init_random, EmbeddingMatrix, HeadKind, InitScheme};

fn shape(layers: usize) -> ModelShape {
    ModelShape { dim: 16, vocab_size: 12, enc_layers: layers, dec_layers: layers, ffn_dim: 24 }
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for kind in HeadKind::ALL {
        for layers in [1, 2] {
            let model = ToyModel::new(shape(layers), kind, 11).unwrap();
            let batch = generate_batch(Task::Reverse, 12, 5, 2, 11, 0).unwrap();
            let report = gradient_check(&model, &batch, 0.1, &GradCheckConfig::default()).unwrap();
            println!("{kind} layers={layers}: checked {} max rel err {:.2e}", report.checked, report.max_rel_error);
            assert!(report.checked >= 200);
            assert!(report.passed(), "{kind} layers={layers}: {report:?}");
        }
    }
}

#[test]
fn distance_head_gradient_includes_minus_column() {
    // d/dw_i of (w_i . h - ½‖w_i‖²) = h - w_i
    let w = init_random(3, 4, InitScheme::Gaussian, 2).unwrap();
    let h = [0.0; 3];
    let mut dh = [0.0; 3];
    let mut dw = vec![0.0; 12];
    let mut ds = [0.0; 4];
    ds[2] = 1.0;
    score_backward(&w, &h, HeadKind::Distance, &ds, &mut dh, &mut dw);
    let expected: Vec<f64> = w.col(2).iter().map(|x| -x).collect();
    assert_eq!(&dw[6..9], expected.as_slice());
}

#[test]
fn head_gradients_match_finite_differences_at_zero_column() {
    let mut w = EmbeddingMatrix::from_columns(&[[0.5, -1.0], [2.0, 0.3], [1.0, 1.0]]).unwrap();
    w.col_mut(2).iter_mut().for_each(|x| *x *= 1e-3);
    let h = [0.7, -0.2];
    let ds = [0.3, -1.1, 0.8];
    for kind in HeadKind::ALL {
        let mut dh = [0.0; 2];
        let mut dw = vec![0.0; 6];
        score_backward(&w, &h, kind, &ds, &mut dh, &mut dw);
        let objective = |w: &EmbeddingMatrix, h: &[f64]| {
            let mut s = vec![0.0; 3];
            tiedheads::heads::score_into(w, h, kind, &mut s);
            s.iter().zip(&ds).map(|(a, b)| a * b).sum::<f64>()
        };
        for i in 0..6 {
            let step = 1e-7;
            let mut up = w.clone();
            up.as_mut_slice()[i] += step;
            let mut down = w.clone();
            down.as_mut_slice()[i] -= step;
            let n = (objective(&up, &h) - objective(&down, &h)) / (2.0 * step);
            assert!((n - dw[i]).abs() <= 1e-5 * (1.0 + n.abs()), "{kind} w[{i}]: {n} vs {}", dw[i]);
        }
        for d in 0..2 {
            let mut hp = h;
            hp[d] += 1e-7;
            let mut hm = h;
            hm[d] -= 1e-7;
            let n = (objective(&w, &hp) - objective(&w, &hm)) / 2e-7;
            assert!((n - dh[d]).abs() <= 1e-5 * (1.0 + n.abs()), "{kind} h[{d}]");
        }
    }
}
