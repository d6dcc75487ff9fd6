use proptest::prelude::*;

use vip_core::baseline_gp::{gp_fit_grid, gp_log_marginal, gp_predict, GpGrid, RbfKernel};
use vip_core::{Matrix, Rng};

fn random(rng: &mut Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, rng.standard_normal(r * c)).unwrap()
}

// Gaussian elimination with partial pivoting: (A⁻¹b, log|A|).
fn dense_solve_logdet(a: &Matrix, b: &[f64]) -> (Vec<f64>, f64) {
    let n = a.rows();
    let mut m = a.clone();
    let mut x = b.to_vec();
    let mut logdet = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs())).unwrap();
        if p != c {
            for j in 0..n {
                let t = m[(c, j)];
                m[(c, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            x.swap(c, p);
        }
        logdet += m[(c, c)].abs().ln();
        for r in c + 1..n {
            let f = m[(r, c)] / m[(c, c)];
            for j in c..n {
                m[(r, j)] -= f * m[(c, j)];
            }
            x[r] -= f * x[c];
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|j| m[(c, j)] * x[j]).sum();
        x[c] = (x[c] - s) / m[(c, c)];
    }
    (x, logdet)
}

#[test]
fn two_point_hand_instance() {
    let k = RbfKernel::new(0.8, 1.5).unwrap();
    let x = Matrix::column(&[-0.4, 0.6]);
    let y = [0.7, -0.2];
    let sigma2 = 0.1;
    let xs = Matrix::column(&[0.1]);
    let p = gp_predict(&k, &x, &y, sigma2, &xs).unwrap();

    let r = k.eval(&[-0.4], &[0.6]);
    let (a, d) = (1.5 + sigma2, 1.5 + sigma2);
    let det = a * d - r * r;
    let inv = [[d / det, -r / det], [-r / det, a / det]];
    let ks = [k.eval(&[-0.4], &[0.1]), k.eval(&[0.6], &[0.1])];
    let w = [inv[0][0] * y[0] + inv[0][1] * y[1], inv[1][0] * y[0] + inv[1][1] * y[1]];
    let mean = ks[0] * w[0] + ks[1] * w[1];
    let quad = ks[0] * (inv[0][0] * ks[0] + inv[0][1] * ks[1]) + ks[1] * (inv[1][0] * ks[0] + inv[1][1] * ks[1]);
    assert!((p.mean[0] - mean).abs() <= 1e-10);
    assert!((p.var_f[0] - (1.5 - quad)).abs() <= 1e-10);
    assert!((p.var_y[0] - (1.5 - quad + sigma2)).abs() <= 1e-10);

    let lm = gp_log_marginal(&k, &x, &y, sigma2).unwrap();
    let expected = -0.5 * (y[0] * w[0] + y[1] * w[1]) - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln();
    assert!((lm - expected).abs() <= 1e-10);
}

#[test]
fn log_marginal_matches_dense_oracle() {
    let mut rng = Rng::new(51, 0);
    for trial in 0..40 {
        let n = 1 + rng.below(30);
        let x = random(&mut rng, n, 2);
        let y = rng.standard_normal(n);
        let k = RbfKernel::new(0.3 + rng.next_f64(), 0.5 + rng.next_f64()).unwrap();
        let sigma2 = 0.01 + rng.next_f64();
        let gram = k.gram(&x).unwrap().add_diag(sigma2);
        let (alpha, logdet) = dense_solve_logdet(&gram, &y);
        let quad: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let oracle = -0.5 * (quad + logdet + n as f64 * (2.0 * std::f64::consts::PI).ln());
        let lm = gp_log_marginal(&k, &x, &y, sigma2).unwrap();
        assert!((lm - oracle).abs() <= 1e-8, "trial {trial}: {lm} vs {oracle}");
    }
}

#[test]
fn grid_winner_dominates_every_cell() {
    let mut rng = Rng::new(52, 0);
    let x = random(&mut rng, 15, 1);
    let y: Vec<f64> = (0..15).map(|i| (2.0 * x[(i, 0)]).sin() + 0.1 * rng.next_normal()).collect();
    let grid = GpGrid::default();
    let fit = gp_fit_grid(&x, &y, &grid).unwrap();
    for &l in &grid.lengthscale {
        for &v in &grid.signal_variance {
            for &s in &grid.sigma2 {
                let lm = gp_log_marginal(&RbfKernel::new(l, v).unwrap(), &x, &y, s).unwrap();
                assert!(lm <= fit.log_marginal);
            }
        }
    }
    let again = gp_log_marginal(&fit.kernel, &x, &y, fit.sigma2).unwrap();
    assert_eq!(again, fit.log_marginal);
}

#[test]
fn grid_ties_prefer_smallest_values() {
    // with no data the marginal is identical in every cell
    let grid = GpGrid { lengthscale: vec![2.0, 0.5, 1.0], signal_variance: vec![1.0], sigma2: vec![0.3, 0.1] };
    let fit = gp_fit_grid(&Matrix::zeros(0, 1), &[], &grid).unwrap();
    assert_eq!((fit.kernel.lengthscale, fit.sigma2), (0.5, 0.1));
}

#[test]
fn empty_grid_axis_rejected() {
    let grid = GpGrid { lengthscale: vec![], ..GpGrid::default() };
    assert!(gp_fit_grid(&Matrix::column(&[0.0]), &[1.0], &grid).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_marginal_exchangeable(n in 1usize..20, seed in any::<u64>()) {
        let mut rng = Rng::new(seed, 0);
        let x = random(&mut rng, n, 2);
        let y = rng.standard_normal(n);
        let perm = rng.permutation(n);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let k = RbfKernel::new(0.7, 1.2).unwrap();
        let a = gp_log_marginal(&k, &x, &y, 0.2).unwrap();
        let b = gp_log_marginal(&k, &x.select_rows(&perm), &yp, 0.2).unwrap();
        prop_assert!((a - b).abs() <= 1e-10);
    }

    #[test]
    fn predictive_variance_bounds(
        n in 1usize..20, m in 1usize..8, ls in 0.1f64..3.0, sv in 0.1f64..3.0, s2 in 1e-3f64..1.0, seed in any::<u64>()
    ) {
        let mut rng = Rng::new(seed, 0);
        let x = random(&mut rng, n, 1);
        let y = rng.standard_normal(n);
        let xs = random(&mut rng, m, 1);
        let p = gp_predict(&RbfKernel::new(ls, sv).unwrap(), &x, &y, s2, &xs).unwrap();
        for v in &p.var_f {
            prop_assert!(*v >= 0.0 && *v <= sv + 1e-8);
        }
        let cov = p.cov.unwrap();
        let min = vip_core::numkit::symmetric_eigenvalues(&cov).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-8);
    }
}
