use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{Result, VipError};
use crate::numkit::{sigmoid, softplus, Matrix};

pub type NodeId = usize;

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Dot(NodeId, NodeId),
    Square(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sqrt(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    BroadcastAddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Shift(NodeId),
    SumCols(NodeId),
    MeanRows(NodeId),
    StackRows(Vec<NodeId>),
    Diag(NodeId),
    LowerSoftplusDiag(NodeId),
}

struct Node {
    value: Rc<Matrix>,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of a computation. Nodes are appended in evaluation
/// order, so parents always precede children.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    visits: Cell<usize>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.len())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), visits: Cell::new(0) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf.
    pub fn var(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Matrix::scalar(value))
    }

    /// Node visits made by the most recent backward pass.
    pub fn last_backward_visits(&self) -> usize {
        self.visits.get()
    }

    pub(crate) fn push(&self, value: Matrix, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value: Rc::new(value), op, requires_grad });
        Var { tape: self, id }
    }

    pub(crate) fn value(&self, id: NodeId) -> Rc<Matrix> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(VipError::Contract("loss belongs to a different tape".into()));
        }
        let nodes = self.nodes.borrow();
        let n = nodes.len();
        if nodes[loss.id].value.shape() != (1, 1) {
            let (r, c) = nodes[loss.id].value.shape();
            return Err(VipError::Contract(format!("backward needs a scalar loss, got {r}x{c}")));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; n];
        grads[loss.id] = Some(Matrix::scalar(1.0));
        let mut visits = 0usize;

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            visits += 1;
            let node = &nodes[id];
            if let Op::Leaf = node.op {
                grads[id] = Some(g);
                continue;
            }
            let val = |k: NodeId| -> &Matrix { &nodes[k].value };
            let mut emit = |k: NodeId, contrib: Matrix| {
                if !nodes[k].requires_grad {
                    return;
                }
                match &mut grads[k] {
                    Some(acc) => {
                        for (a, c) in acc.as_mut_slice().iter_mut().zip(contrib.as_slice()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    emit(*a, reduce_to(&g, val(*a)));
                    emit(*b, reduce_to(&g, val(*b)));
                }
                Op::Sub(a, b) => {
                    emit(*a, reduce_to(&g, val(*a)));
                    emit(*b, reduce_to(&g.scale(-1.0), val(*b)));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    emit(*a, reduce_to(&bmap(&g, vb, |g, b| g * b), va));
                    emit(*b, reduce_to(&bmap(&g, va, |g, a| g * a), vb));
                }
                Op::Div(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    emit(*a, reduce_to(&bmap(&g, vb, |g, b| g / b), va));
                    let out = &node.value;
                    let gb = bmap(&bmap(&g, out, |g, o| g * o), vb, |go, b| -go / b);
                    emit(*b, reduce_to(&gb, vb));
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    if nodes[*a].requires_grad {
                        emit(*a, g.matmul_t(vb).expect("shapes checked in forward"));
                    }
                    if nodes[*b].requires_grad {
                        emit(*b, va.t_matmul(&g).expect("shapes checked in forward"));
                    }
                }
                Op::Transpose(a) => emit(*a, g.transpose()),
                Op::Sum(a) => {
                    let (r, c) = val(*a).shape();
                    emit(*a, Matrix::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = val(*a).shape();
                    emit(*a, Matrix::filled(r, c, g.item() / (r * c) as f64));
                }
                Op::Dot(a, b) => {
                    let s = g.item();
                    emit(*a, val(*b).scale(s));
                    emit(*b, val(*a).scale(s));
                }
                Op::Square(a) => emit(*a, zip(&g, val(*a), |g, x| 2.0 * g * x)),
                Op::Exp(a) => emit(*a, zip(&g, &node.value, |g, o| g * o)),
                Op::Log(a) => emit(*a, zip(&g, val(*a), |g, x| g / x)),
                Op::Sqrt(a) => emit(*a, zip(&g, &node.value, |g, o| g / (2.0 * o))),
                Op::Tanh(a) => emit(*a, zip(&g, &node.value, |g, o| g * (1.0 - o * o))),
                Op::Relu(a) => emit(*a, zip(&g, val(*a), |g, x| if x > 0.0 { g } else { 0.0 })),
                Op::Softplus(a) => emit(*a, zip(&g, val(*a), |g, x| g * sigmoid(x))),
                Op::BroadcastAddRow(a, row) => {
                    let (r, c) = g.shape();
                    let mut gr = Matrix::zeros(1, c);
                    for i in 0..r {
                        for j in 0..c {
                            gr[(0, j)] += g[(i, j)];
                        }
                    }
                    emit(*row, gr);
                    emit(*a, g);
                }
                Op::Scale(a, c) => emit(*a, g.scale(*c)),
                Op::Shift(a) => emit(*a, g),
                Op::SumCols(a) => {
                    let (r, c) = val(*a).shape();
                    emit(*a, Matrix::from_fn(r, c, |i, _| g[(i, 0)]));
                }
                Op::MeanRows(a) => {
                    let (r, c) = val(*a).shape();
                    let inv = 1.0 / r as f64;
                    emit(*a, Matrix::from_fn(r, c, |_, j| g[(0, j)] * inv));
                }
                Op::StackRows(parts) => {
                    for (k, &p) in parts.iter().enumerate() {
                        let (pr, pc) = val(p).shape();
                        emit(p, Matrix::from_vec(pr, pc, g.row_slice(k).to_vec()).expect("row shape"));
                    }
                }
                Op::Diag(a) => {
                    let n = g.rows();
                    let mut ga = Matrix::zeros(n, n);
                    for i in 0..n {
                        ga[(i, i)] = g[(i, 0)];
                    }
                    emit(*a, ga);
                }
                Op::LowerSoftplusDiag(a) => {
                    let raw = val(*a);
                    let ga = Matrix::from_fn(raw.rows(), raw.cols(), |i, j| match i.cmp(&j) {
                        std::cmp::Ordering::Greater => g[(i, j)],
                        std::cmp::Ordering::Equal => g[(i, j)] * sigmoid(raw[(i, j)]),
                        std::cmp::Ordering::Less => 0.0,
                    });
                    emit(*a, ga);
                }
            }
        }
        self.visits.set(visits);
        Ok(Gradients { grads })
    }
}

/// Output of a backward pass, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zeros when `var` did not
    /// participate.
    pub fn get(&self, var: Var<'_>) -> Matrix {
        match self.grads.get(var.id).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = var.value().shape();
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn by_id(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id).and_then(Option::as_ref)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: NodeId,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.value();
        write!(f, "Var#{} {}x{}", self.id, v.rows(), v.cols())
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Matrix> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().shape()
    }

    /// Value of a 1x1 node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }
}

// Gradient with a broadcast operand summed back down to that operand's shape.
fn reduce_to(g: &Matrix, target: &Matrix) -> Matrix {
    if g.shape() == target.shape() {
        g.clone()
    } else {
        Matrix::scalar(g.sum())
    }
}

fn zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    a.zip_map(b, "backward", f).expect("gradient shape matches value")
}

// Elementwise map of `g` against `other`, where `other` may be 1x1.
fn bmap(g: &Matrix, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    if other.shape() == (1, 1) && g.shape() != (1, 1) {
        let o = other.item();
        g.map(|x| f(x, o))
    } else if g.shape() == (1, 1) && other.shape() != (1, 1) {
        let gv = g.item();
        other.map(|x| f(gv, x))
    } else {
        zip(g, other, f)
    }
}

pub(crate) fn softplus_matrix(m: &Matrix) -> Matrix {
    m.map(softplus)
}
