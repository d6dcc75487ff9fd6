use vip_core::autodiff::{grad_check, grad_check_single, stack_rows, Tape, Var};
use vip_core::{Matrix, Result, Rng};

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn random(rng: &mut Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, rng.standard_normal(r * c)).unwrap()
}

fn positive(rng: &mut Rng, r: usize, c: usize) -> Matrix {
    random(rng, r, c).map(|x| 0.5 + x.abs())
}

// Sums a weighted view of the output so every entry contributes distinctly.
fn reduce<'t>(t: &'t Tape, v: Var<'t>) -> Result<Var<'t>> {
    let (r, c) = v.shape();
    let w = t.constant(Matrix::from_fn(r, c, |i, j| 0.3 + 0.7 * ((i * c + j) as f64).sin()));
    v.mul(&w).map(|m| m.sum())
}

fn check_unary(name: &str, make: impl Fn(&mut Rng) -> Matrix, f: impl for<'t> Fn(Var<'t>) -> Result<Var<'t>>) {
    let mut rng = Rng::new(2024, 0);
    for trial in 0..20 {
        let x = make(&mut rng);
        let err = grad_check_single(|t, v| reduce(t, f(v)?), &x, H).unwrap();
        assert!(err <= TOL, "{name} trial {trial}: rel err {err}");
    }
}

fn check_binary(
    name: &str,
    make: impl Fn(&mut Rng) -> (Matrix, Matrix),
    f: impl for<'t> Fn(Var<'t>, Var<'t>) -> Result<Var<'t>>,
) {
    let mut rng = Rng::new(77, 0);
    for trial in 0..20 {
        let (a, b) = make(&mut rng);
        let err = grad_check(|t, vs| reduce(t, f(vs[0], vs[1])?), &[a, b], H).unwrap();
        assert!(err <= TOL, "{name} trial {trial}: rel err {err}");
    }
}

#[test]
fn elementwise_unary_ops() {
    check_unary("square", |r| random(r, 3, 2), |v| Ok(v.square()));
    check_unary("exp", |r| random(r, 3, 2), |v| Ok(v.exp()));
    check_unary("log", |r| positive(r, 3, 2), |v| Ok(v.log()));
    check_unary("sqrt", |r| positive(r, 3, 2), |v| Ok(v.sqrt()));
    check_unary("tanh", |r| random(r, 3, 2), |v| Ok(v.tanh()));
    check_unary("softplus", |r| random(r, 3, 2), |v| Ok(v.softplus()));
    // keep relu inputs away from the kink
    check_unary("relu", |r| random(r, 3, 2).map(|x| if x.abs() < 0.1 { x + 0.3 } else { x }), |v| Ok(v.relu()));
    check_unary("scale", |r| random(r, 2, 2), |v| Ok(v.scale(-2.5)));
    check_unary("shift", |r| random(r, 2, 2), |v| Ok(v.shift(1.5)));
    check_unary("transpose", |r| random(r, 2, 3), |v| Ok(v.transpose()));
    check_unary("sum", |r| random(r, 2, 3), |v| Ok(v.sum()));
    check_unary("mean", |r| random(r, 2, 3), |v| Ok(v.mean()));
    check_unary("sum_cols", |r| random(r, 4, 3), |v| Ok(v.sum_cols()));
    check_unary("mean_rows", |r| random(r, 4, 3), |v| Ok(v.mean_rows()));
    check_unary("diag", |r| random(r, 3, 3), |v| v.diag());
    check_unary("lower_softplus_diag", |r| random(r, 3, 3), |v| v.lower_softplus_diag());
}

#[test]
fn binary_ops() {
    check_binary("add", |r| (random(r, 2, 3), random(r, 2, 3)), |a, b| a.add(&b));
    check_binary("add scalar", |r| (random(r, 2, 3), random(r, 1, 1)), |a, b| a.add(&b));
    check_binary("sub", |r| (random(r, 2, 3), random(r, 2, 3)), |a, b| a.sub(&b));
    check_binary("sub scalar lhs", |r| (random(r, 1, 1), random(r, 2, 3)), |a, b| a.sub(&b));
    check_binary("mul", |r| (random(r, 3, 2), random(r, 3, 2)), |a, b| a.mul(&b));
    check_binary("mul scalar", |r| (random(r, 3, 2), random(r, 1, 1)), |a, b| a.mul(&b));
    check_binary("div", |r| (random(r, 3, 2), positive(r, 3, 2)), |a, b| a.div(&b));
    check_binary("div scalar lhs", |r| (random(r, 1, 1), positive(r, 3, 2)), |a, b| a.div(&b));
    check_binary("div scalar rhs", |r| (random(r, 3, 2), positive(r, 1, 1)), |a, b| a.div(&b));
    check_binary("matmul", |r| (random(r, 3, 4), random(r, 4, 2)), |a, b| a.matmul(&b));
    check_binary("matvec", |r| (random(r, 3, 4), random(r, 4, 1)), |a, b| a.matvec(&b));
    check_binary("dot", |r| (random(r, 5, 1), random(r, 5, 1)), |a, b| a.dot(&b));
    check_binary("broadcast_add_row", |r| (random(r, 4, 3), random(r, 1, 3)), |a, b| a.broadcast_add_row(&b));
    check_binary("stack_rows", |r| (random(r, 1, 3), random(r, 3, 1)), |a, b| stack_rows(&[a, b, a]));
}

#[test]
fn backward_examples() {
    let t = Tape::new();
    let x = t.var(Matrix::column(&[1.0, 2.0, 3.0]));
    let g = t.backward(x.sum()).unwrap();
    assert_eq!(g.get(x).as_slice(), &[1.0, 1.0, 1.0]);

    let t = Tape::new();
    let x = t.var(Matrix::column(&[1.0, 2.0]));
    let g = t.backward(x.dot(&x).unwrap()).unwrap();
    assert_eq!(g.get(x).as_slice(), &[2.0, 4.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let t = Tape::new();
    let x = t.var(Matrix::column(&[1.0, 2.0]));
    assert!(t.backward(x.square()).is_err());
}

#[test]
fn unused_leaf_gets_zero_gradient() {
    let t = Tape::new();
    let x = t.var(Matrix::column(&[1.0, 2.0]));
    let unused = t.var(Matrix::zeros(2, 3));
    let g = t.backward(x.sum()).unwrap();
    assert_eq!(g.get(unused), Matrix::zeros(2, 3));
}

#[test]
fn backward_is_repeatable_and_linear_in_nodes() {
    let t = Tape::new();
    let x = t.var(Matrix::column(&[0.3, -1.2, 2.0]));
    let mut acc = x;
    for _ in 0..50 {
        acc = acc.tanh().scale(1.1).add(&x).unwrap();
    }
    let loss = acc.square().sum();
    let g1 = t.backward(loss).unwrap().get(x);
    let visits = t.last_backward_visits();
    let g2 = t.backward(loss).unwrap().get(x);
    assert_eq!(g1, g2);
    assert!(visits <= t.len(), "{visits} visits for {} nodes", t.len());
}

#[test]
fn grad_check_trivial_cases() {
    let p = Matrix::column(&[0.5, -2.0, 3.0]);
    let err = grad_check_single(|_, v| Ok(v.square().sum()), &p, 1e-5).unwrap();
    assert!(err <= 1e-7, "{err}");
    let err = grad_check_single(|t, _| Ok(t.scalar(4.0)), &p, 1e-5).unwrap();
    assert_eq!(err, 0.0);
}
