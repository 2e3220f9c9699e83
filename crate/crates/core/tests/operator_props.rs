use gramsos::bench::random_instance;
use gramsos::spectral::{nuclear_norm, schur_sym, threshold_matrix, SymMatrix};
use gramsos::ConstraintSystem;
use proptest::prelude::*;

fn sym(n: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-5.0f64..5.0, n * n).prop_map(move |v| SymMatrix::from_lower_fn(n, |i, j| v[i * n + j]))
}

fn small_system() -> ConstraintSystem {
    random_instance(12, 3, 7, 3).unwrap().cs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn adjoint_identity(w in sym(12), pool in prop::collection::vec(-3.0f64..3.0, 256)) {
        let cs = small_system();
        let y = &pool[..cs.p()];
        let aw = cs.apply(&w).unwrap();
        let lhs: f64 = aw.iter().zip(y).map(|(a, b)| a * b).sum();
        let rhs = w.dot(&cs.adjoint(y).unwrap());
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        prop_assert!((lhs - rhs).abs() / scale < 1e-12, "{} vs {}", lhs, rhs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn operator_norm_bounds_the_map(w in sym(12)) {
        let cs = small_system();
        let aw: f64 = cs.apply(&w).unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(aw <= cs.op_norm_sq().sqrt() * w.norm_fro() * (1.0 + 1e-12));
    }

    #[test]
    fn subgradient_inequality(w in sym(5), w2 in sym(5)) {
        let eig = schur_sym(&w).unwrap();
        prop_assume!(eig.lambda.iter().all(|l| l.abs() > 1e-6));
        let n = w.n();
        let g = SymMatrix::from_lower_fn(n, |i, j| {
            (0..n).map(|k| eig.lambda[k].signum() * eig.q[(i, k)] * eig.q[(j, k)]).sum()
        });
        let lhs = nuclear_norm(&w2).unwrap();
        let rhs = nuclear_norm(&w).unwrap() + g.dot(&w2.sub(&w));
        prop_assert!(lhs >= rhs - 1e-10, "{} < {}", lhs, rhs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn thresholding_is_nonexpansive(x1 in sym(6), x2 in sym(6), frac in 0.0f64..1.0) {
        let top = x1.norm_spectral().max(x2.norm_spectral());
        let nu = 2.0 * top * frac;
        let d = threshold_matrix(&x1, nu).unwrap().sub(&threshold_matrix(&x2, nu).unwrap()).norm_fro();
        prop_assert!(d <= x1.sub(&x2).norm_fro() + 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn thresholding_equality_case(x in sym(5), frac in 0.0f64..0.5) {
        // a PSD shift keeps X1 - X2 = D(X1) - D(X2) when both are PSD well above nu
        let nu = frac;
        let base = x.add(&SymMatrix::identity(5).scale(x.norm_spectral() + 1.0 + nu));
        let x2 = base.add(&SymMatrix::identity(5).scale(0.5));
        let d1 = threshold_matrix(&base, nu).unwrap();
        let d2 = threshold_matrix(&x2, nu).unwrap();
        let diff_in = base.sub(&x2);
        let diff_out = d1.sub(&d2);
        prop_assert!(diff_in.sub(&diff_out).norm_fro() < 1e-9);
        prop_assert!((diff_in.norm_fro() - diff_out.norm_fro()).abs() < 1e-10);
    }

    #[test]
    fn thresholding_minimizes_the_prox_objective(x in sym(4), nu in 0.0f64..3.0, dirs in prop::collection::vec(sym(4), 20)) {
        let d = threshold_matrix(&x, nu).unwrap();
        let obj = |w: &SymMatrix| nu * nuclear_norm(w).unwrap() + 0.5 * w.sub(&x).norm_fro().powi(2);
        let best = obj(&d);
        for dir in &dirs {
            let delta = dir.scale(0.1 / dir.norm_fro().max(1e-12) * 0.99);
            let cand = d.add(&delta);
            let min_eig = schur_sym(&cand).unwrap().lambda.last().copied().unwrap();
            if min_eig < 0.0 {
                continue;
            }
            prop_assert!(obj(&cand) >= best - 1e-12);
        }
    }
}

#[test]
fn planted_instances_are_exactly_feasible() {
    for seed in 0..10 {
        let inst = random_instance(15, 3, seed, 5).unwrap();
        assert_eq!(inst.cs.apply_exact(&inst.w_true).unwrap(), inst.cs.b_exact());
    }
}
