//! Forward operations. Each records one node on the tape.

use super::tape::{softplus_matrix, Op, Var};
use crate::error::{Result, VipError};
use crate::numkit::Matrix;

fn shape_str(m: &Matrix) -> String {
    format!("{}x{}", m.rows(), m.cols())
}

// Elementwise binary op; one side may be a 1x1 scalar that broadcasts.
fn broadcast_binary(
    op: &'static str,
    a: &Matrix,
    b: &Matrix,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Matrix> {
    if a.shape() == b.shape() {
        a.zip_map(b, op, f)
    } else if b.shape() == (1, 1) {
        let bv = b.item();
        Ok(a.map(|x| f(x, bv)))
    } else if a.shape() == (1, 1) {
        let av = a.item();
        Ok(b.map(|x| f(av, x)))
    } else {
        Err(VipError::dim(op, format!("{} vs {}", shape_str(a), shape_str(b))))
    }
}

impl<'t> Var<'t> {
    fn same_tape(&self, other: &Var<'t>, op: &'static str) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(VipError::Contract(format!("{op}: operands live on different tapes")))
        }
    }

    fn unary(&self, value: Matrix, op: Op) -> Var<'t> {
        self.tape.push(value, op, self.requires_grad())
    }

    fn binary(&self, other: &Var<'t>, value: Matrix, op: Op) -> Var<'t> {
        let rg = self.requires_grad() || other.requires_grad();
        self.tape.push(value, op, rg)
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other, "add")?;
        let v = broadcast_binary("add", &self.value(), &other.value(), |a, b| a + b)?;
        Ok(self.binary(other, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other, "sub")?;
        let v = broadcast_binary("sub", &self.value(), &other.value(), |a, b| a - b)?;
        Ok(self.binary(other, v, Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other, "mul")?;
        let v = broadcast_binary("mul", &self.value(), &other.value(), |a, b| a * b)?;
        Ok(self.binary(other, v, Op::Mul(self.id, other.id)))
    }

    /// Elementwise quotient.
    pub fn div(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other, "div")?;
        let v = broadcast_binary("div", &self.value(), &other.value(), |a, b| a / b)?;
        Ok(self.binary(other, v, Op::Div(self.id, other.id)))
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other, "matmul")?;
        let v = self.value().matmul(&other.value())?;
        Ok(self.binary(other, v, Op::MatMul(self.id, other.id)))
    }

    /// Matrix times column vector.
    pub fn matvec(&self, v: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(v, "matvec")?;
        let vv = v.value();
        if vv.cols() != 1 {
            return Err(VipError::dim("matvec", format!("vector operand is {}", shape_str(&vv))));
        }
        let out = self.value().matmul(&vv).map_err(|_| {
            VipError::dim("matvec", format!("{} times {}", shape_str(&self.value()), shape_str(&vv)))
        })?;
        Ok(self.binary(v, out, Op::MatMul(self.id, v.id)))
    }

    pub fn transpose(&self) -> Var<'t> {
        self.unary(self.value().transpose(), Op::Transpose(self.id))
    }

    /// Sum of all entries. Entries are added in sorted order, so the value
    /// does not depend on how rows are arranged.
    pub fn sum(&self) -> Var<'t> {
        let mut vals = self.value().as_slice().to_vec();
        vals.sort_by(f64::total_cmp);
        self.unary(Matrix::scalar(vals.iter().sum()), Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var<'t> {
        let v = self.value();
        self.unary(Matrix::scalar(v.sum() / v.len() as f64), Op::Mean(self.id))
    }

    /// Inner product of two equally shaped operands.
    pub fn dot(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other, "dot")?;
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(VipError::dim("dot", format!("{} vs {}", shape_str(&a), shape_str(&b))));
        }
        let d = crate::numkit::dot(a.as_slice(), b.as_slice());
        Ok(self.binary(other, Matrix::scalar(d), Op::Dot(self.id, other.id)))
    }

    pub fn square(&self) -> Var<'t> {
        self.unary(self.value().map(|x| x * x), Op::Square(self.id))
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(self.value().map(f64::exp), Op::Exp(self.id))
    }

    pub fn log(&self) -> Var<'t> {
        self.unary(self.value().map(f64::ln), Op::Log(self.id))
    }

    pub fn sqrt(&self) -> Var<'t> {
        self.unary(self.value().map(f64::sqrt), Op::Sqrt(self.id))
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(self.value().map(f64::tanh), Op::Tanh(self.id))
    }

    /// Rectifier; the subgradient at 0 is 0.
    pub fn relu(&self) -> Var<'t> {
        self.unary(self.value().map(|x| x.max(0.0)), Op::Relu(self.id))
    }

    pub fn softplus(&self) -> Var<'t> {
        self.unary(softplus_matrix(&self.value()), Op::Softplus(self.id))
    }

    /// Adds a 1 x cols row to every row of `self`.
    pub fn broadcast_add_row(&self, row: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(row, "broadcast_add_row")?;
        let (a, r) = (self.value(), row.value());
        if r.rows() != 1 || r.cols() != a.cols() {
            return Err(VipError::dim(
                "broadcast_add_row",
                format!("row {} against matrix {}", shape_str(&r), shape_str(&a)),
            ));
        }
        let rs = r.as_slice();
        let out = Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] + rs[j]);
        Ok(self.binary(row, out, Op::BroadcastAddRow(self.id, row.id)))
    }

    /// Multiplies by a constant.
    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(self.value().scale(c), Op::Scale(self.id, c))
    }

    /// Adds a constant to every entry.
    pub fn shift(&self, c: f64) -> Var<'t> {
        self.unary(self.value().map(|x| x + c), Op::Shift(self.id))
    }

    pub fn neg(&self) -> Var<'t> {
        self.scale(-1.0)
    }

    /// Row sums as a column (rows x 1).
    pub fn sum_cols(&self) -> Var<'t> {
        let v = self.value();
        let out = Matrix::from_fn(v.rows(), 1, |i, _| v.row_slice(i).iter().sum());
        self.unary(out, Op::SumCols(self.id))
    }

    /// Column means as a row (1 x cols).
    pub fn mean_rows(&self) -> Var<'t> {
        let v = self.value();
        let n = v.rows() as f64;
        let mut out = Matrix::zeros(1, v.cols());
        for i in 0..v.rows() {
            for (o, x) in out.as_mut_slice().iter_mut().zip(v.row_slice(i)) {
                *o += x;
            }
        }
        for o in out.as_mut_slice() {
            *o /= n;
        }
        self.unary(out, Op::MeanRows(self.id))
    }

    /// Diagonal of a square matrix as a column.
    pub fn diag(&self) -> Result<Var<'t>> {
        let v = self.value();
        if !v.is_square() {
            return Err(VipError::dim("diag", format!("{} is not square", shape_str(&v))));
        }
        Ok(self.unary(Matrix::column(&v.diag()), Op::Diag(self.id)))
    }

    /// Lower-triangular factor from an unconstrained square matrix: the strict
    /// lower part is kept, the diagonal passes through softplus, the upper
    /// part is dropped.
    pub fn lower_softplus_diag(&self) -> Result<Var<'t>> {
        let v = self.value();
        if !v.is_square() {
            return Err(VipError::dim("lower_softplus_diag", format!("{} is not square", shape_str(&v))));
        }
        let out = Matrix::from_fn(v.rows(), v.cols(), |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => v[(i, j)],
            std::cmp::Ordering::Equal => crate::numkit::softplus(v[(i, j)]),
            std::cmp::Ordering::Less => 0.0,
        });
        Ok(self.unary(out, Op::LowerSoftplusDiag(self.id)))
    }
}

/// Stacks 1 x cols (or cols x 1) operands as the rows of a new matrix.
pub fn stack_rows<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let first = parts.first().ok_or_else(|| VipError::dim("stack_rows", "no operands"))?;
    let tape = first.tape;
    let width = first.value().len();
    let mut data = Vec::with_capacity(width * parts.len());
    let mut rg = false;
    for p in parts {
        if !std::ptr::eq(p.tape, tape) {
            return Err(VipError::Contract("stack_rows: operands live on different tapes".into()));
        }
        let v = p.value();
        if (v.rows() != 1 && v.cols() != 1) || v.len() != width {
            return Err(VipError::dim("stack_rows", format!("operand {} vs width {width}", shape_str(&v))));
        }
        data.extend_from_slice(v.as_slice());
        rg |= p.requires_grad();
    }
    let out = Matrix::from_vec(parts.len(), width, data)?;
    Ok(tape.push(out, Op::StackRows(parts.iter().map(|p| p.id).collect()), rg))
}
