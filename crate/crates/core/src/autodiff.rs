//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records a scalar computation as a flat list of nodes. Every
//! node stores its value plus the indices and local partial derivatives of
//! its parents, so a single reverse sweep ([`Tape::backward`]) accumulates
//! the gradient of one output with respect to every recorded node.
//!
//! The design favors throughput over generality: nodes are appended to flat
//! arrays, n-ary reductions (`sum`, `dot`, `min`, ...) are single nodes, and
//! the tape can be [`reset`](Tape::reset) and reused so a training loop
//! allocates once per process rather than once per batch.

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(pub(crate) u32);

impl Var {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Recorded computation graph.
#[derive(Default)]
pub struct Tape {
    vals: Vec<f64>,
    edge_start: Vec<usize>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            vals: Vec::new(),
            edge_start: vec![0],
            parents: Vec::new(),
            partials: Vec::new(),
        }
    }

    /// Drops all nodes but keeps allocated capacity.
    pub fn reset(&mut self) {
        self.vals.clear();
        self.edge_start.clear();
        self.edge_start.push(0);
        self.parents.clear();
        self.partials.clear();
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    #[inline]
    pub fn val(&self, x: Var) -> f64 {
        self.vals[x.index()]
    }

    #[inline]
    fn seal(&mut self, v: f64) -> Var {
        let id = self.vals.len() as u32;
        self.vals.push(v);
        self.edge_start.push(self.parents.len());
        Var(id)
    }

    #[inline]
    fn push_edge(&mut self, p: Var, d: f64) {
        self.parents.push(p.0);
        self.partials.push(d);
    }

    /// Creates an input node. Gradients are accumulated for leaves like for
    /// any other node; callers that push parameters first can read the
    /// parameter gradient from the head of the adjoint buffer.
    pub fn leaf(&mut self, v: f64) -> Var {
        self.seal(v)
    }

    /// Pushes a block of leaves and returns the index of the first one.
    /// The block occupies consecutive node ids.
    pub fn leaf_block(&mut self, vs: &[f64]) -> usize {
        let first = self.vals.len();
        for &v in vs {
            self.seal(v);
        }
        first
    }

    // ── unary ──

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.val(a);
        self.push_edge(a, -1.0);
        self.seal(v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let d = if x > 0.0 { 1.0 } else { 0.0 };
        self.push_edge(a, d);
        self.seal(if x > 0.0 { x } else { 0.0 })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.val(a).tanh();
        self.push_edge(a, 1.0 - t * t);
        self.seal(t)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let s = sigmoid(self.val(a));
        self.push_edge(a, s * (1.0 - s));
        self.seal(s)
    }

    /// ln(1 + e^x), the stable building block of the logistic loss.
    pub fn softplus(&mut self, a: Var) -> Var {
        let x = self.val(a);
        self.push_edge(a, sigmoid(x));
        self.seal(softplus(x))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = self.val(a).exp();
        self.push_edge(a, e);
        self.seal(e)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let s = self.val(a).sqrt();
        self.push_edge(a, 0.5 / s);
        self.seal(s)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let x = self.val(a);
        self.push_edge(a, 2.0 * x);
        self.seal(x * x)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.val(a) + c;
        self.push_edge(a, 1.0);
        self.seal(v)
    }

    pub fn mul_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.val(a) * c;
        self.push_edge(a, c);
        self.seal(v)
    }

    // ── binary ──

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) + self.val(b);
        self.push_edge(a, 1.0);
        self.push_edge(b, 1.0);
        self.seal(v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) - self.val(b);
        self.push_edge(a, 1.0);
        self.push_edge(b, -1.0);
        self.seal(v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.val(a), self.val(b));
        self.push_edge(a, vb);
        self.push_edge(b, va);
        self.seal(va * vb)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.val(a), self.val(b));
        self.push_edge(a, 1.0 / vb);
        self.push_edge(b, -va / (vb * vb));
        self.seal(va / vb)
    }

    // ── n-ary reductions (one node each) ──

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let mut v = 0.0;
        for &x in xs {
            v += self.vals[x.index()];
            self.push_edge(x, 1.0);
        }
        self.seal(v)
    }

    pub fn mean(&mut self, xs: &[Var]) -> Var {
        let n = xs.len() as f64;
        let mut v = 0.0;
        for &x in xs {
            v += self.vals[x.index()];
            self.push_edge(x, 1.0 / n);
        }
        self.seal(v / n)
    }

    /// Inner product Σᵢ xᵢ·yᵢ.
    pub fn dot(&mut self, xs: &[Var], ys: &[Var]) -> Var {
        debug_assert_eq!(xs.len(), ys.len());
        let mut v = 0.0;
        for (&x, &y) in xs.iter().zip(ys) {
            let (vx, vy) = (self.vals[x.index()], self.vals[y.index()]);
            v += vx * vy;
            self.push_edge(x, vy);
            self.push_edge(y, vx);
        }
        self.seal(v)
    }

    /// Trilinear form Σᵢ xᵢ·yᵢ·zᵢ.
    pub fn dot3(&mut self, xs: &[Var], ys: &[Var], zs: &[Var]) -> Var {
        debug_assert!(xs.len() == ys.len() && ys.len() == zs.len());
        let mut v = 0.0;
        for ((&x, &y), &z) in xs.iter().zip(ys).zip(zs) {
            let (vx, vy, vz) = (self.vals[x.index()], self.vals[y.index()], self.vals[z.index()]);
            v += vx * vy * vz;
            self.push_edge(x, vy * vz);
            self.push_edge(y, vx * vz);
            self.push_edge(z, vx * vy);
        }
        self.seal(v)
    }

    /// Σᵢ wᵢ·xᵢ with constant weights (one node; weights are the partials).
    pub fn weighted_sum(&mut self, xs: &[Var], ws: &[f64]) -> Var {
        debug_assert_eq!(xs.len(), ws.len());
        let mut v = 0.0;
        for (&x, &w) in xs.iter().zip(ws) {
            v += self.vals[x.index()] * w;
            self.push_edge(x, w);
        }
        self.seal(v)
    }

    /// Minimum of a nonempty slice. The subgradient is routed to the first
    /// element attaining the minimum, so ties resolve to the lowest index.
    pub fn min(&mut self, xs: &[Var]) -> Var {
        let mut best = xs[0];
        let mut v = self.val(best);
        for &x in &xs[1..] {
            let vx = self.val(x);
            if vx < v {
                v = vx;
                best = x;
            }
        }
        self.push_edge(best, 1.0);
        self.seal(v)
    }

    /// Maximum of a nonempty slice; ties route to the lowest index.
    pub fn max(&mut self, xs: &[Var]) -> Var {
        let mut best = xs[0];
        let mut v = self.val(best);
        for &x in &xs[1..] {
            let vx = self.val(x);
            if vx > v {
                v = vx;
                best = x;
            }
        }
        self.push_edge(best, 1.0);
        self.seal(v)
    }

    /// Accumulates d(root)/d(node) for every node into `adj`.
    ///
    /// `adj` is resized and zeroed; after the call `adj[i]` holds the adjoint
    /// of node `i`. Leaves created by [`leaf_block`](Tape::leaf_block) at the
    /// start of the tape can be read back as a contiguous gradient slice.
    pub fn backward(&self, root: Var, adj: &mut Vec<f64>) {
        adj.clear();
        adj.resize(self.vals.len(), 0.0);
        adj[root.index()] = 1.0;
        for i in (0..=root.index()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            for j in self.edge_start[i]..self.edge_start[i + 1] {
                adj[self.parents[j] as usize] += self.partials[j] * a;
            }
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + e^x).
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
