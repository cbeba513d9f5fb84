use contkd_core::losses::{continuation_kd_loss, annealing_loss};
use contkd_core::{Graph, Tensor};
use proptest::prelude::*;

const ROWS: usize = 3;
const COLS: usize = 4;

/// Loss value and gradient w.r.t. the student logits.
fn hinge(z_s: &[f64], z_t: &[f64], phi: f64, margin: f64) -> (f64, Vec<f64>) {
    let mut g = Graph::new();
    let s = g.param(Tensor::matrix(ROWS, COLS, z_s.to_vec()).unwrap());
    let t = Tensor::matrix(ROWS, COLS, z_t.to_vec()).unwrap();
    let l = continuation_kd_loss(&mut g, s, &t, phi, margin).unwrap();
    g.backward(l).unwrap();
    (g.value(l).item(), g.grad(s).to_vec())
}

/// Student logits `φ·z_T + r_i·u_i` with unit directions `u_i` and row radii `r_i`.
fn around_teacher(z_t: &[f64], dirs: &[f64], phi: f64, radii: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(ROWS * COLS);
    for r in 0..ROWS {
        let d = &dirs[r * COLS..(r + 1) * COLS];
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        for c in 0..COLS {
            out.push(phi * z_t[r * COLS + c] + radii[r] * d[c] / norm);
        }
    }
    out
}

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, ROWS * COLS)
}

fn directions() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![-1.0..-0.1f64, 0.1..1.0f64], ROWS * COLS)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn inside_the_margin_ball_is_dead(
        z_t in logits(),
        dirs in directions(),
        phi in 0.01..=1.0f64,
        margin in 0.01..10.0f64,
        frac in prop::collection::vec(0.0..0.999f64, ROWS),
    ) {
        let radius = (margin * phi).sqrt();
        let radii: Vec<f64> = frac.iter().map(|f| f * radius).collect();
        let z_s = around_teacher(&z_t, &dirs, phi, &radii);
        let (loss, grad) = hinge(&z_s, &z_t, phi, margin);
        prop_assert_eq!(loss, 0.0);
        prop_assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn just_outside_the_margin_ball_is_live(
        z_t in logits(),
        dirs in directions(),
        phi in 0.01..=1.0f64,
        margin in 0.01..10.0f64,
        row in 0..ROWS,
    ) {
        let radius = (margin * phi).sqrt();
        let mut radii = vec![0.0; ROWS];
        radii[row] = radius * 1.01;
        let z_s = around_teacher(&z_t, &dirs, phi, &radii);
        let (loss, grad) = hinge(&z_s, &z_t, phi, margin);
        prop_assert!(loss > 0.0);
        prop_assert!(grad[row * COLS..(row + 1) * COLS].iter().any(|&g| g != 0.0));
    }

    #[test]
    fn non_negative_and_non_increasing_in_margin(
        z_s in logits(),
        z_t in logits(),
        phi in 0.01..=1.0f64,
        m1 in 0.0..10.0f64,
        dm in 0.0..10.0f64,
    ) {
        let (a, _) = hinge(&z_s, &z_t, phi, m1);
        let (b, _) = hinge(&z_s, &z_t, phi, m1 + dm);
        prop_assert!(a >= 0.0 && b >= 0.0);
        prop_assert!(b <= a);
    }

    #[test]
    fn zero_margin_matches_annealing_loss(
        z_s in logits(),
        z_t in logits(),
        phi in 0.01..=1.0f64,
    ) {
        let (h, hg) = hinge(&z_s, &z_t, phi, 0.0);
        let mut g = Graph::new();
        let s = g.param(Tensor::matrix(ROWS, COLS, z_s.clone()).unwrap());
        let t = Tensor::matrix(ROWS, COLS, z_t.clone()).unwrap();
        let l = annealing_loss(&mut g, s, &t, phi).unwrap();
        g.backward(l).unwrap();
        prop_assert_eq!(h, g.value(l).item());
        prop_assert_eq!(hg, g.grad(s).to_vec());
    }

    #[test]
    fn live_gradient_is_linear_in_the_gap(
        z_s in logits(),
        z_t in logits(),
        phi in 0.01..=1.0f64,
    ) {
        // m = 0 keeps every row live: dL/dz_S = 2(z_S − φ·z_T)/B.
        let (_, grad) = hinge(&z_s, &z_t, phi, 0.0);
        for i in 0..ROWS * COLS {
            let expect = 2.0 * (z_s[i] - phi * z_t[i]) / ROWS as f64;
            prop_assert!((grad[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn deterministic(z_s in logits(), z_t in logits(), phi in 0.01..=1.0f64, m in 0.0..5.0f64) {
        prop_assert_eq!(hinge(&z_s, &z_t, phi, m), hinge(&z_s, &z_t, phi, m));
    }
}
