//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every primitive records its inputs on a [`Tape`]; [`Tape::backward`]
//! walks the records in reverse and accumulates adjoints. Graph topology is
//! baked into the gather/scatter/segment primitives, so one tape is built per
//! network snapshot.

use super::matrix::Matrix;
use super::DiffError;
use crate::scalar::Scalar;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, T),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Square(Var),
    Recip(Var),
    MaxConst(Var, T),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    VConcat(Vec<Var>),
    HConcat(Vec<Var>),
    SliceCols(Var, usize),
    SegmentSoftmax(Var, Vec<usize>, usize),
    HeadScale(Var, Var),
    BlockSum(Var, usize),
    HeadMean(Var, usize),
    RowSum(Var),
    Sum(Var),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::MulCol(..) => "mul_col",
            Op::Scale(..) => "scale",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Square(..) => "square",
            Op::Recip(..) => "recip",
            Op::MaxConst(..) => "max_const",
            Op::GatherRows(..) => "gather_rows",
            Op::ScatterAddRows(..) => "scatter_add_rows",
            Op::VConcat(..) => "vconcat",
            Op::HConcat(..) => "hconcat",
            Op::SliceCols(..) => "slice_cols",
            Op::SegmentSoftmax(..) => "segment_softmax",
            Op::HeadScale(..) => "head_scale",
            Op::BlockSum(..) => "block_sum",
            Op::HeadMean(..) => "head_mean",
            Op::RowSum(..) => "row_sum",
            Op::Sum(..) => "sum",
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording of a forward computation.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the differentiated output with respect to `v`, or zeros
    /// of the right shape when `v` does not influence the output.
    pub fn get(&self, v: Var, shape: (usize, usize)) -> Matrix<T> {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Matrix::zeros(shape.0, shape.1),
        }
    }

    pub fn get_ref(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.nodes[v.0].value.get(0, 0)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// `a[n×m] + b[1×m]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(bv.shape(), (1, av.cols()), "add_row: bias shape");
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, &x) in out.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *o += x;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::AddRow(a, b), rg)
    }

    /// `a[n×m] ⊙ b[1×m]` broadcast over rows.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(bv.shape(), (1, av.cols()), "mul_row: row shape");
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, &x) in out.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *o *= x;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MulRow(a, b), rg)
    }

    /// `a[n×m] ⊙ b[n×1]` broadcast over columns.
    pub fn mul_col(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(bv.shape(), (av.rows(), 1), "mul_col: column shape");
        let mut out = av.clone();
        for r in 0..out.rows() {
            let s = bv.get(r, 0);
            for o in out.row_mut(r) {
                *o *= s;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MulCol(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let value = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let value = self
            .value(a)
            .map(|x| if x > T::zero() { x } else { x * slope });
        let rg = self.rg(a);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| {
            if x >= T::zero() {
                T::one() / (T::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (T::one() + e)
            }
        });
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.tanh());
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let rg = self.rg(a);
        self.push(value, Op::Square(a), rg)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| T::one() / x);
        let rg = self.rg(a);
        self.push(value, Op::Recip(a), rg)
    }

    /// `max(a, c)`; ties resolve to `c` with zero gradient.
    pub fn max_const(&mut self, a: Var, c: T) -> Var {
        let value = self.value(a).map(|x| if x > c { x } else { c });
        let rg = self.rg(a);
        self.push(value, Op::MaxConst(a, c), rg)
    }

    /// Row `r` of the output is row `idx[r]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        let cols = av.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(av.row(i));
        }
        let value = Matrix::from_vec(idx.len(), cols, data);
        let rg = self.rg(a);
        self.push(value, Op::GatherRows(a, idx.to_vec()), rg)
    }

    /// Segment sum: output row `s` is the sum of rows `r` of `a` with `idx[r] == s`.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], segments: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), idx.len(), "scatter_add_rows: index length");
        let mut out = Matrix::zeros(segments, av.cols());
        for (r, &s) in idx.iter().enumerate() {
            for (o, &x) in out.row_mut(s).iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::ScatterAddRows(a, idx.to_vec()), rg)
    }

    /// Stacks inputs vertically; all inputs share a column count.
    pub fn vconcat(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "vconcat: column mismatch");
            rows += v.rows();
            data.extend_from_slice(v.as_slice());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Matrix::from_vec(rows, cols, data), Op::VConcat(parts.to_vec()), rg)
    }

    /// Joins inputs side by side; all inputs share a row count.
    pub fn hconcat(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let v = self.value(p);
                assert_eq!(v.rows(), rows, "hconcat: row mismatch");
                data.extend_from_slice(v.row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Matrix::from_vec(rows, cols, data), Op::HConcat(parts.to_vec()), rg)
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let av = self.value(a);
        assert!(start <= end && end <= av.cols(), "slice_cols: bad range");
        let mut data = Vec::with_capacity(av.rows() * (end - start));
        for r in 0..av.rows() {
            data.extend_from_slice(&av.row(r)[start..end]);
        }
        let value = Matrix::from_vec(av.rows(), end - start, data);
        let rg = self.rg(a);
        self.push(value, Op::SliceCols(a, start), rg)
    }

    /// Column-wise softmax within each segment of rows; `seg[r]` names the
    /// segment of row `r`.
    pub fn segment_softmax(&mut self, a: Var, seg: &[usize], segments: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), seg.len(), "segment_softmax: segment length");
        let cols = av.cols();
        let mut max = Matrix::filled(segments, cols, T::neg_infinity());
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let x = av.get(r, c);
                if x > max.get(s, c) {
                    max.set(s, c, x);
                }
            }
        }
        let mut out = Matrix::zeros(av.rows(), cols);
        let mut denom = Matrix::zeros(segments, cols);
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let e = (av.get(r, c) - max.get(s, c)).exp();
                out.set(r, c, e);
                denom.set(s, c, denom.get(s, c) + e);
            }
        }
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                out.set(r, c, out.get(r, c) / denom.get(s, c));
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::SegmentSoftmax(a, seg.to_vec(), segments), rg)
    }

    /// Multiplies head block `h` of each row of `msg[e×H·d]` by `alpha[r,h]`.
    pub fn head_scale(&mut self, msg: Var, alpha: Var) -> Var {
        let (mv, av) = (self.value(msg), self.value(alpha));
        assert_eq!(mv.rows(), av.rows(), "head_scale: row mismatch");
        let heads = av.cols();
        assert_eq!(mv.cols() % heads, 0, "head_scale: width not divisible by heads");
        let d = mv.cols() / heads;
        let mut out = mv.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for h in 0..heads {
                let s = av.get(r, h);
                for x in &mut row[h * d..(h + 1) * d] {
                    *x *= s;
                }
            }
        }
        let rg = self.rg(msg) || self.rg(alpha);
        self.push(out, Op::HeadScale(msg, alpha), rg)
    }

    /// Sums each of the `heads` contiguous column blocks: `[e×H·d] → [e×H]`.
    pub fn block_sum(&mut self, a: Var, heads: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.cols() % heads, 0, "block_sum: width not divisible by heads");
        let d = av.cols() / heads;
        let mut out = Matrix::zeros(av.rows(), heads);
        for r in 0..av.rows() {
            let row = av.row(r);
            for h in 0..heads {
                out.set(r, h, row[h * d..(h + 1) * d].iter().copied().sum());
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::BlockSum(a, heads), rg)
    }

    /// Averages the `heads` contiguous column blocks: `[n×H·d] → [n×d]`.
    pub fn head_mean(&mut self, a: Var, heads: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.cols() % heads, 0, "head_mean: width not divisible by heads");
        let d = av.cols() / heads;
        let inv = T::one() / T::from_usize(heads).expect("head count");
        let mut out = Matrix::zeros(av.rows(), d);
        for r in 0..av.rows() {
            let row = av.row(r);
            let o = out.row_mut(r);
            for h in 0..heads {
                for (k, ok) in o.iter_mut().enumerate() {
                    *ok += row[h * d + k] * inv;
                }
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::HeadMean(a, heads), rg)
    }

    /// `[n×m] → [n×1]`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows()).map(|r| av.row(r).iter().copied().sum()).collect();
        let value = Matrix::column(data);
        let rg = self.rg(a);
        self.push(value, Op::RowSum(a), rg)
    }

    /// Sum of every entry as a `1×1` matrix.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.sum(a);
        self.scale(s, T::one() / T::from_usize(n.max(1)).expect("count"))
    }

    /// Reverse sweep from a `1×1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>, DiffError> {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Matrix::scalar(T::one()));

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if !self.propagate(i, &g, &mut grads) {
                return Err(DiffError::NonFinite {
                    primitive: node.op.name(),
                });
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Adds `g` into the adjoint of `v` without an intermediate copy. `g`
    /// is already known finite when this runs.
    fn acc_ref(&self, v: Var, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    /// Pushes the adjoint of node `i` to its inputs; false if any produced
    /// adjoint is non-finite.
    fn propagate(&self, i: usize, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) -> bool {
        let node = &self.nodes[i];
        if let Op::Add(a, b) = node.op {
            self.acc_ref(a, g, grads);
            self.acc_ref(b, g, grads);
            return true;
        }
        let out = &node.value;
        let mut finite = true;
        let mut acc = |v: Var, delta: Matrix<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            finite &= delta.is_finite();
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.matmul_t(self.value(*b)));
                }
                if self.rg(*b) {
                    acc(*b, self.value(*a).t_matmul(g));
                }
            }
            Op::Add(..) => unreachable!("handled above"),
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.clone());
                }
                if self.rg(*b) {
                    acc(*b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::AddRow(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.clone());
                }
                if self.rg(*b) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &x) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(*b, gb);
                }
            }
            Op::MulRow(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let mut ga = g.clone();
                    for r in 0..ga.rows() {
                        for (o, &x) in ga.row_mut(r).iter_mut().zip(bv.as_slice()) {
                            *o *= x;
                        }
                    }
                    acc(*a, ga);
                }
                if self.rg(*b) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            gb.set(0, c, gb.get(0, c) + g.get(r, c) * av.get(r, c));
                        }
                    }
                    acc(*b, gb);
                }
            }
            Op::MulCol(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let mut ga = g.clone();
                    for r in 0..ga.rows() {
                        let s = bv.get(r, 0);
                        for o in ga.row_mut(r) {
                            *o *= s;
                        }
                    }
                    acc(*a, ga);
                }
                if self.rg(*b) {
                    let data = (0..g.rows())
                        .map(|r| g.row(r).iter().zip(av.row(r)).map(|(&x, &y)| x * y).sum())
                        .collect();
                    acc(*b, Matrix::column(data));
                }
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * *s)),
            Op::LeakyRelu(a, slope) => {
                let av = self.value(*a);
                acc(
                    *a,
                    g.zip_map(av, |x, y| if y > T::zero() { x } else { x * *slope }),
                );
            }
            Op::Sigmoid(a) => acc(*a, g.zip_map(out, |x, y| x * y * (T::one() - y))),
            Op::Tanh(a) => acc(*a, g.zip_map(out, |x, y| x * (T::one() - y * y))),
            Op::Square(a) => {
                let two = T::one() + T::one();
                acc(*a, g.zip_map(self.value(*a), |x, y| two * x * y));
            }
            Op::Recip(a) => acc(*a, g.zip_map(out, |x, y| -x * y * y)),
            Op::MaxConst(a, c) => {
                let av = self.value(*a);
                acc(*a, g.zip_map(av, |x, y| if y > *c { x } else { T::zero() }));
            }
            Op::GatherRows(a, idx) => {
                let (rows, cols) = self.shape(*a);
                let mut ga = Matrix::zeros(rows, cols);
                for (r, &src) in idx.iter().enumerate() {
                    for (o, &x) in ga.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                acc(*a, ga);
            }
            Op::ScatterAddRows(a, idx) => {
                let cols = g.cols();
                let mut data = Vec::with_capacity(idx.len() * cols);
                for &s in idx {
                    data.extend_from_slice(g.row(s));
                }
                acc(*a, Matrix::from_vec(idx.len(), cols, data));
            }
            Op::VConcat(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let rows = self.shape(p).0;
                    if self.rg(p) {
                        let slice = g.as_slice()[offset * cols..(offset + rows) * cols].to_vec();
                        acc(p, Matrix::from_vec(rows, cols, slice));
                    }
                    offset += rows;
                }
            }
            Op::HConcat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.shape(p);
                    if self.rg(p) {
                        let mut data = Vec::with_capacity(rows * cols);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        acc(p, Matrix::from_vec(rows, cols, data));
                    }
                    offset += cols;
                }
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = self.shape(*a);
                let mut ga = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*a, ga);
            }
            Op::SegmentSoftmax(a, seg, segments) => {
                let cols = g.cols();
                let mut dot = Matrix::zeros(*segments, cols);
                for (r, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        dot.set(s, c, dot.get(s, c) + g.get(r, c) * out.get(r, c));
                    }
                }
                let mut ga = Matrix::zeros(g.rows(), cols);
                for (r, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        ga.set(r, c, out.get(r, c) * (g.get(r, c) - dot.get(s, c)));
                    }
                }
                acc(*a, ga);
            }
            Op::HeadScale(msg, alpha) => {
                let (mv, av) = (self.value(*msg), self.value(*alpha));
                let heads = av.cols();
                let d = mv.cols() / heads;
                if self.rg(*msg) {
                    let mut gm = g.clone();
                    for r in 0..gm.rows() {
                        let row = gm.row_mut(r);
                        for h in 0..heads {
                            let s = av.get(r, h);
                            for x in &mut row[h * d..(h + 1) * d] {
                                *x *= s;
                            }
                        }
                    }
                    acc(*msg, gm);
                }
                if self.rg(*alpha) {
                    let mut galpha = Matrix::zeros(av.rows(), heads);
                    for r in 0..av.rows() {
                        let (gr, mr) = (g.row(r), mv.row(r));
                        for h in 0..heads {
                            let s = gr[h * d..(h + 1) * d]
                                .iter()
                                .zip(&mr[h * d..(h + 1) * d])
                                .map(|(&x, &y)| x * y)
                                .sum();
                            galpha.set(r, h, s);
                        }
                    }
                    acc(*alpha, galpha);
                }
            }
            Op::BlockSum(a, heads) => {
                let (rows, cols) = self.shape(*a);
                let d = cols / heads;
                let mut ga = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    for h in 0..*heads {
                        let x = g.get(r, h);
                        for o in &mut ga.row_mut(r)[h * d..(h + 1) * d] {
                            *o = x;
                        }
                    }
                }
                acc(*a, ga);
            }
            Op::HeadMean(a, heads) => {
                let (rows, cols) = self.shape(*a);
                let d = cols / heads;
                let inv = T::one() / T::from_usize(*heads).expect("head count");
                let mut ga = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    for h in 0..*heads {
                        for k in 0..d {
                            ga.set(r, h * d + k, g.get(r, k) * inv);
                        }
                    }
                }
                acc(*a, ga);
            }
            Op::RowSum(a) => {
                let (rows, cols) = self.shape(*a);
                let mut ga = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let x = g.get(r, 0);
                    for o in ga.row_mut(r) {
                        *o = x;
                    }
                }
                acc(*a, ga);
            }
            Op::Sum(a) => {
                let (rows, cols) = self.shape(*a);
                acc(*a, Matrix::filled(rows, cols, g.get(0, 0)));
            }
        }
        finite
    }
}
