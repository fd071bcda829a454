//! Reverse-mode differentiation over a linear tape of 2-D matrices.
//!
//! Only the operations the caption model needs are recorded. Forward values
//! are computed eagerly; `backward` walks the tape in reverse and returns the
//! gradient of every parameter leaf.

use ndarray::{concatenate, s, Array2, Axis};

pub(crate) type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Var(usize);

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
struct AttentionCache {
    /// Per row: (max score, scaled denominator, used plain softmax,
    /// number of visible columns).
    rows: Vec<(f64, f64, bool, usize)>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Columns(Var, usize),
    Concat(Vec<Var>),
    Gather(Var, Vec<usize>),
    Attention {
        scores: Var,
        geo: Option<(Var, usize)>,
        cache: AttentionCache,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Mat,
        scale: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
}

#[derive(Debug, Default)]
pub(crate) struct Tape {
    nodes: Vec<Node>,
}

/// Row-wise attention weights, optionally modulated by nonnegative geometric
/// weights: w_ij = g_ij exp(s_ij) / Σ_k g_ik exp(s_ik). Rows whose geometric
/// denominator vanishes fall back to a plain softmax. With `causal`, column j
/// of row i is only visible when j ≤ i.
fn attention_weights(
    scores: &Mat,
    geo: Option<(&Mat, usize)>,
    causal: bool,
) -> (Mat, AttentionCache) {
    let (n, m) = scores.dim();
    let mut out = Mat::zeros((n, m));
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let visible = if causal { (i + 1).min(m) } else { m };
        let row = scores.slice(s![i, ..visible]);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut fallback = true;
        let mut denom = 0.0;
        if let Some((g, col)) = geo {
            for j in 0..visible {
                let w = g[[i * m + j, col]] * (row[j] - max).exp();
                out[[i, j]] = w;
                denom += w;
            }
            fallback = !(denom > 0.0);
        }
        if fallback {
            denom = 0.0;
            for j in 0..visible {
                let w = (row[j] - max).exp();
                out[[i, j]] = w;
                denom += w;
            }
        }
        for j in 0..visible {
            out[[i, j]] /= denom;
        }
        rows.push((max, denom, fallback, visible));
    }
    (out, AttentionCache { rows })
}

/// Non-causal attention weights against a single geometric column.
pub(crate) fn attention_weights_public(scores: &Mat, geo: &Mat) -> Mat {
    attention_weights(scores, Some((geo, 0)), false).0
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, index: usize, value: &Mat) -> Var {
        self.push(value.clone(), Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// a · bᵀ
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a 1×n row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (n, d) = xv.dim();
        let mut xhat = Mat::zeros((n, d));
        let mut inv_std = Vec::with_capacity(n);
        for (i, row) in xv.outer_iter().enumerate() {
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for j in 0..d {
                xhat[[i, j]] = (row[j] - mean) * is;
            }
            inv_std.push(is);
        }
        let out = &xhat * self.value(gain) + self.value(bias);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    pub fn columns(&mut self, a: Var, start: usize, width: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + width]).to_owned();
        self.push(v, Op::Columns(a, start))
    }

    pub fn concat_columns(&mut self, parts: Vec<Var>) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("parts share a row count");
        self.push(v, Op::Concat(parts))
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut v = Mat::zeros((ids.len(), t.ncols()));
        for (r, &id) in ids.iter().enumerate() {
            v.row_mut(r).assign(&t.row(id));
        }
        self.push(v, Op::Gather(table, ids.to_vec()))
    }

    /// Attention weights from an n×m score matrix. `geo` selects column
    /// `head` of an (n·m)×H matrix of nonnegative geometric weights.
    pub fn attention(&mut self, scores: Var, geo: Option<(Var, usize)>, causal: bool) -> Var {
        let (w, cache) = attention_weights(
            self.value(scores),
            geo.map(|(g, h)| (self.value(g), h)),
            causal,
        );
        self.push(w, Op::Attention { scores, geo, cache })
    }

    /// `scale` × Σ over unmasked rows of −log softmax(logits)[target], as a
    /// 1×1 matrix.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>], scale: f64) -> Var {
        let lv = self.value(logits);
        let mut probs = Mat::zeros(lv.dim());
        let mut total = 0.0;
        for (i, row) in lv.outer_iter().enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let log_z = max + sum.ln();
            for (j, x) in row.iter().enumerate() {
                probs[[i, j]] = (x - log_z).exp();
            }
            if let Some(t) = targets[i] {
                total += log_z - row[t];
            }
        }
        self.push(
            Mat::from_elem((1, 1), scale * total),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                scale,
            },
        )
    }

    /// Gradients of the 1×1 node `loss` with respect to every parameter
    /// leaf, indexed by parameter number. Parameters not on the tape get
    /// `None`.
    pub fn backward(&self, loss: Var, n_params: usize) -> Vec<Option<Mat>> {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::ones((1, 1)));
        let mut out: Vec<Option<Mat>> = (0..n_params).map(|_| None).collect();

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => match &mut out[*p] {
                    Some(existing) => *existing += &g,
                    slot => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, g);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, g * *k),
                Op::Relu(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(&node.value, |d, &y| {
                        if y <= 0.0 {
                            *d = 0.0
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gain_v = self.value(*gain);
                    let ggain = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gbias = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &g * gain_v;
                    let d = xhat.ncols() as f64;
                    let mut gx = Mat::zeros(xhat.dim());
                    for i in 0..xhat.nrows() {
                        let dr = dxhat.row(i);
                        let xr = xhat.row(i);
                        let mean_d = dr.sum() / d;
                        let mean_dx = dr.dot(&xr) / d;
                        for j in 0..xhat.ncols() {
                            gx[[i, j]] = inv_std[i] * (dr[j] - mean_d - xr[j] * mean_dx);
                        }
                    }
                    acc(&mut grads, *gain, ggain);
                    acc(&mut grads, *bias, gbias);
                    acc(&mut grads, *x, gx);
                }
                Op::Columns(a, start) => {
                    let mut ga = Mat::zeros(self.value(*a).dim());
                    ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::Concat(parts) => {
                    let mut col = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., col..col + w]).to_owned());
                        col += w;
                    }
                }
                Op::Gather(table, ids) => {
                    let mut gt = Mat::zeros(self.value(*table).dim());
                    for (r, &id) in ids.iter().enumerate() {
                        let mut dst = gt.row_mut(id);
                        dst += &g.row(r);
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::Attention { scores, geo, cache } => {
                    let w = &node.value;
                    let sv = self.value(*scores);
                    let (n, m) = w.dim();
                    let mut gs = Mat::zeros((n, m));
                    let mut gg = geo.map(|(gv, _)| Mat::zeros(self.value(gv).dim()));
                    for i in 0..n {
                        let (max, denom, fallback, visible) = cache.rows[i];
                        let dot: f64 = (0..visible).map(|j| w[[i, j]] * g[[i, j]]).sum();
                        for j in 0..visible {
                            gs[[i, j]] = w[[i, j]] * (g[[i, j]] - dot);
                        }
                        if let (Some(gg), Some((_, col)), false) = (gg.as_mut(), geo, fallback) {
                            for j in 0..visible {
                                let e = (sv[[i, j]] - max).exp();
                                gg[[i * m + j, *col]] += e / denom * (g[[i, j]] - dot);
                            }
                        }
                    }
                    acc(&mut grads, *scores, gs);
                    if let (Some(gg), Some((gv, _))) = (gg, geo) {
                        acc(&mut grads, *gv, gg);
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                    scale,
                } => {
                    let k = g[[0, 0]] * scale;
                    let mut gl = Mat::zeros(probs.dim());
                    for (i, t) in targets.iter().enumerate() {
                        if let Some(t) = t {
                            for j in 0..probs.ncols() {
                                gl[[i, j]] = k * probs[[i, j]];
                            }
                            gl[[i, *t]] -= k;
                        }
                    }
                    acc(&mut grads, *logits, gl);
                }
            }
        }
        out
    }
}
