//! Reverse-mode autodiff over `f64` batch matrices.
//!
//! A [`Tape`] is built per batch: forward calls append nodes, `backward`
//! walks the reachable subgraph in reverse insertion order and accumulates
//! parameter gradients into a [`GradStore`]. Values are `(rows, cols)`
//! matrices; per-instance data lives in rows.
//!
//! `Const` leaves carry no parents, which is how detached (stop-gradient)
//! inputs are expressed: re-inject a computed value as a constant and no
//! gradient can reach anything upstream of it.

use ndarray::{Array2, Axis};

use super::params::{GradStore, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Const,
    Param(ParamId),
    Embed { table: ParamId, rows: Vec<usize> },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    Col(Var, usize),
    ScaleRows(Var, Var),
    RowDot(Var, Var),
    Scale(Var, f64),
    SumAll(Var),
    BceLogits { logits: Var, labels: Vec<f64> },
    MaskedCe { logits: Var, labels: Vec<usize>, mask: Vec<bool> },
    WeightedCe { logits: Var, labels: Vec<usize>, weights: Vec<f64>, mask: Vec<bool> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

/// Numerically-stable row-wise softmax.
pub fn softmax_rows_array(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const PROB_EPS: f64 = 1e-7;

/// Numerically-guarded per-instance binary cross-entropy on logits.
pub fn bce_per_instance(logits: &Array2<f64>, labels: &[f64]) -> Vec<f64> {
    logits
        .column(0)
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let p = sigmoid(z).clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .collect()
}

/// Per-instance softmax cross-entropy; unmasked rows get 0.
pub fn ce_per_instance(logits: &Array2<f64>, labels: &[usize], mask: &[bool]) -> Vec<f64> {
    (0..logits.nrows())
        .map(|i| {
            if !mask[i] {
                return 0.0;
            }
            let row = logits.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            lse - row[labels[i]]
        })
        .collect()
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape { store, nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A detached leaf: gradients stop here.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(self.store.get(id).clone(), Op::Param(id))
    }

    /// Row-gather from an embedding table parameter.
    pub fn embed(&mut self, table: ParamId, rows: Vec<usize>) -> Var {
        let t = self.store.get(table);
        let mut value = Array2::zeros((rows.len(), t.ncols()));
        for (i, &r) in rows.iter().enumerate() {
            value.row_mut(i).assign(&t.row(r));
        }
        self.push(value, Op::Embed { table, rows })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(value, Op::Sub(a, b))
    }

    /// Broadcast-add a `1 x c` bias row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let value = &self.nodes[a.0].value + &self.nodes[bias.0].value.row(0);
        self.push(value, Op::AddRow(a, bias))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows_array(&self.nodes[a.0].value);
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.nodes[parts[0].0].value.nrows();
        let cols: usize = parts.iter().map(|v| self.nodes[v.0].value.ncols()).sum();
        let mut value = Array2::zeros((rows, cols));
        let mut at = 0;
        for &p in parts {
            let v = &self.nodes[p.0].value;
            value
                .slice_mut(ndarray::s![.., at..at + v.ncols()])
                .assign(v);
            at += v.ncols();
        }
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn col(&mut self, a: Var, j: usize) -> Var {
        let v = self.nodes[a.0].value.column(j).to_owned();
        let value = v.insert_axis(Axis(1));
        self.push(value, Op::Col(a, j))
    }

    /// Multiply each row of `a` by the matching scalar in column vector `s`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Var {
        let sv = &self.nodes[s.0].value;
        let value = &self.nodes[a.0].value * &sv.column(0).to_owned().insert_axis(Axis(1));
        self.push(value, Op::ScaleRows(a, s))
    }

    /// Row-wise dot product of two equal-shape matrices, yielding `r x 1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let value = (av * bv).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::RowDot(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.nodes[a.0].value.mapv(|v| v * c);
        self.push(value, Op::Scale(a, c))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.nodes[a.0].value.sum());
        self.push(value, Op::SumAll(a))
    }

    /// Mean binary cross-entropy over all rows of an `r x 1` logit column.
    pub fn bce_logits(&mut self, logits: Var, labels: Vec<f64>) -> Var {
        let per = bce_per_instance(&self.nodes[logits.0].value, &labels);
        let mean = per.iter().sum::<f64>() / per.len().max(1) as f64;
        self.push(Array2::from_elem((1, 1), mean), Op::BceLogits { logits, labels })
    }

    /// Softmax cross-entropy averaged over masked rows; 0 when none are masked.
    pub fn masked_ce(&mut self, logits: Var, labels: Vec<usize>, mask: Vec<bool>) -> Var {
        let per = ce_per_instance(&self.nodes[logits.0].value, &labels, &mask);
        let n = mask.iter().filter(|&&m| m).count();
        let mean = if n == 0 { 0.0 } else { per.iter().sum::<f64>() / n as f64 };
        self.push(Array2::from_elem((1, 1), mean), Op::MaskedCe { logits, labels, mask })
    }

    /// Weighted softmax cross-entropy over masked rows, normalized by the sum
    /// of the weights. Weights are treated as constants.
    pub fn weighted_ce(
        &mut self,
        logits: Var,
        labels: Vec<usize>,
        weights: Vec<f64>,
        mask: Vec<bool>,
    ) -> Var {
        let per = ce_per_instance(&self.nodes[logits.0].value, &labels, &mask);
        let wsum: f64 = weights
            .iter()
            .zip(&mask)
            .filter(|&(_, &m)| m)
            .map(|(&w, _)| w)
            .sum();
        let value = if wsum > 0.0 {
            per.iter()
                .zip(&weights)
                .zip(&mask)
                .filter(|&(_, &m)| m)
                .map(|((&l, &w), _)| w * l)
                .sum::<f64>()
                / wsum
        } else {
            0.0
        };
        self.push(
            Array2::from_elem((1, 1), value),
            Op::WeightedCe { logits, labels, weights, mask },
        )
    }

    fn parents(&self, i: usize) -> Vec<usize> {
        match &self.nodes[i].op {
            Op::Const | Op::Param(_) | Op::Embed { .. } => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::AddRow(a, b)
            | Op::ScaleRows(a, b)
            | Op::RowDot(a, b) => vec![a.0, b.0],
            Op::Relu(a) | Op::SoftmaxRows(a) | Op::Col(a, _) | Op::Scale(a, _) | Op::SumAll(a) => {
                vec![a.0]
            }
            Op::ConcatCols(parts) => parts.iter().map(|v| v.0).collect(),
            Op::BceLogits { logits, .. }
            | Op::MaskedCe { logits, .. }
            | Op::WeightedCe { logits, .. } => vec![logits.0],
        }
    }

    /// Backpropagate from `root` (seeded with ones) into `grads`.
    pub fn backward(&self, root: Var, grads: &mut GradStore) {
        // Reachability pass: only ancestors of the root participate.
        let mut reachable = vec![false; self.nodes.len()];
        let mut stack = vec![root.0];
        reachable[root.0] = true;
        while let Some(i) = stack.pop() {
            for p in self.parents(i) {
                if !reachable[p] {
                    reachable[p] = true;
                    stack.push(p);
                }
            }
        }

        let mut adj: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root.0] = Some(Array2::ones(self.nodes[root.0].value.raw_dim()));

        for i in (0..self.nodes.len()).rev() {
            if !reachable[i] {
                continue;
            }
            let dy = match adj[i].take() {
                Some(g) => g,
                None => continue,
            };
            let send = |adj: &mut Vec<Option<Array2<f64>>>, v: Var, g: Array2<f64>| {
                match &mut adj[v.0] {
                    Some(acc) => *acc += &g,
                    slot @ None => *slot = Some(g),
                }
            };
            match &self.nodes[i].op {
                Op::Const => {}
                Op::Param(id) => grads.grads[id.0] += &dy,
                Op::Embed { table, rows } => {
                    let g = &mut grads.grads[table.0];
                    for (r, &row) in rows.iter().enumerate() {
                        let mut dst = g.row_mut(row);
                        dst += &dy.row(r);
                    }
                }
                Op::MatMul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    send(&mut adj, *a, dy.dot(&bv.t()));
                    send(&mut adj, *b, av.t().dot(&dy));
                }
                Op::Add(a, b) => {
                    send(&mut adj, *a, dy.clone());
                    send(&mut adj, *b, dy);
                }
                Op::Sub(a, b) => {
                    send(&mut adj, *a, dy.clone());
                    send(&mut adj, *b, -dy);
                }
                Op::AddRow(a, bias) => {
                    let db = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
                    send(&mut adj, *a, dy);
                    send(&mut adj, *bias, db);
                }
                Op::Relu(a) => {
                    let y = &self.nodes[i].value;
                    let da = ndarray::Zip::from(&dy)
                        .and(y)
                        .map_collect(|&g, &v| if v > 0.0 { g } else { 0.0 });
                    send(&mut adj, *a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let mut da = Array2::zeros(y.raw_dim());
                    for r in 0..y.nrows() {
                        let yr = y.row(r);
                        let gr = dy.row(r);
                        let dot: f64 = yr.iter().zip(gr.iter()).map(|(&p, &g)| p * g).sum();
                        for c in 0..y.ncols() {
                            da[[r, c]] = yr[c] * (gr[c] - dot);
                        }
                    }
                    send(&mut adj, *a, da);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let w = self.nodes[p.0].value.ncols();
                        let g = dy.slice(ndarray::s![.., at..at + w]).to_owned();
                        send(&mut adj, p, g);
                        at += w;
                    }
                }
                Op::Col(a, j) => {
                    let av = &self.nodes[a.0].value;
                    let mut g = Array2::zeros(av.raw_dim());
                    g.column_mut(*j).assign(&dy.column(0));
                    send(&mut adj, *a, g);
                }
                Op::ScaleRows(a, s) => {
                    let av = &self.nodes[a.0].value;
                    let sv = &self.nodes[s.0].value;
                    let scol = sv.column(0).to_owned().insert_axis(Axis(1));
                    send(&mut adj, *a, &dy * &scol);
                    let ds = (&dy * av).sum_axis(Axis(1)).insert_axis(Axis(1));
                    send(&mut adj, *s, ds);
                }
                Op::RowDot(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let dcol = dy.column(0).to_owned().insert_axis(Axis(1));
                    send(&mut adj, *a, bv * &dcol);
                    send(&mut adj, *b, av * &dcol);
                }
                Op::Scale(a, c) => send(&mut adj, *a, dy.mapv(|v| v * c)),
                Op::SumAll(a) => {
                    let g = Array2::from_elem(self.nodes[a.0].value.raw_dim(), dy[[0, 0]]);
                    send(&mut adj, *a, g);
                }
                Op::BceLogits { logits, labels } => {
                    let z = &self.nodes[logits.0].value;
                    let n = labels.len() as f64;
                    let scale = dy[[0, 0]] / n;
                    let mut g = Array2::zeros(z.raw_dim());
                    for (r, &y) in labels.iter().enumerate() {
                        g[[r, 0]] = scale * (sigmoid(z[[r, 0]]) - y);
                    }
                    send(&mut adj, *logits, g);
                }
                Op::MaskedCe { logits, labels, mask } => {
                    let n = mask.iter().filter(|&&m| m).count();
                    if n > 0 {
                        let g = ce_grad(&self.nodes[logits.0].value, labels, mask, |_| {
                            dy[[0, 0]] / n as f64
                        });
                        send(&mut adj, *logits, g);
                    }
                }
                Op::WeightedCe { logits, labels, weights, mask } => {
                    let wsum: f64 = weights
                        .iter()
                        .zip(mask)
                        .filter(|&(_, &m)| m)
                        .map(|(&w, _)| w)
                        .sum();
                    if wsum > 0.0 {
                        let g = ce_grad(&self.nodes[logits.0].value, labels, mask, |r| {
                            dy[[0, 0]] * weights[r] / wsum
                        });
                        send(&mut adj, *logits, g);
                    }
                }
            }
        }
    }
}

fn ce_grad(
    logits: &Array2<f64>,
    labels: &[usize],
    mask: &[bool],
    row_scale: impl Fn(usize) -> f64,
) -> Array2<f64> {
    let probs = softmax_rows_array(logits);
    let mut g = Array2::zeros(logits.raw_dim());
    for r in 0..logits.nrows() {
        if !mask[r] {
            continue;
        }
        let s = row_scale(r);
        for c in 0..logits.ncols() {
            let delta = if c == labels[r] { 1.0 } else { 0.0 };
            g[[r, c]] = s * (probs[[r, c]] - delta);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::glorot;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Ids {
        w: ParamId,
        b: ParamId,
        table: ParamId,
        gate_w: ParamId,
    }

    /// Composite graph exercising every op; returns the scalar root.
    fn build_graph<'s>(store: &'s ParamStore, ids: &Ids) -> (Tape<'s>, Var) {
        let mut tape = Tape::new(store);
        let e = tape.embed(ids.table, vec![0, 3, 1]);
        let gw = tape.param(ids.gate_w);
        let gl = tape.matmul(e, gw);
        let gs = tape.softmax_rows(gl);
        let g0 = tape.col(gs, 0);
        let g1 = tape.col(gs, 1);
        let e2 = tape.scale_rows(e, g0);
        let e3 = tape.scale_rows(e, g1);
        let mix = tape.add(e2, e3);
        let dot = tape.row_dot(mix, e);
        let wide = tape.concat_cols(&[mix, dot, e2]); // 3 x 5
        let wv = tape.param(ids.w);
        let h = tape.matmul(wide, wv);
        let bb = tape.param(ids.b);
        let hb = tape.add_row(h, bb);
        let hr = tape.relu(hb);
        let hs = tape.scale(hr, 0.7);
        let ce = tape.masked_ce(hs, vec![0, 2, 1], vec![true, false, true]);
        let col = tape.col(hs, 0);
        let bce = tape.bce_logits(col, vec![1.0, 0.0, 1.0]);
        let wce = tape.weighted_ce(hs, vec![1, 0, 2], vec![0.5, 2.0, 1.0], vec![true, true, true]);
        let t1 = tape.add(ce, bce);
        let sum = tape.add(t1, wce);
        (tape, sum)
    }

    /// Central-difference check of every op through a composite scalar graph.
    #[test]
    fn composite_graph_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let ids = Ids {
            w: store.add("w", glorot(&mut rng, 5, 3)),
            b: store.add("b", glorot(&mut rng, 1, 3)),
            table: store.add("emb", glorot(&mut rng, 5, 2)),
            gate_w: store.add("gate", glorot(&mut rng, 2, 2)),
        };

        let mut grads = GradStore::zeros_like(&store);
        {
            let (tape, root) = build_graph(&store, &ids);
            tape.backward(root, &mut grads);
        }

        let h = 1e-6;
        let mut probe = store.clone();
        for coord in 0..store.n_elements() {
            let orig = probe.get_flat(coord);
            probe.set_flat(coord, orig + h);
            let up = {
                let (tape, root) = build_graph(&probe, &ids);
                tape.scalar(root)
            };
            probe.set_flat(coord, orig - h);
            let down = {
                let (tape, root) = build_graph(&probe, &ids);
                tape.scalar(root)
            };
            probe.set_flat(coord, orig);
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get_flat(coord);
            assert!(
                (numeric - analytic).abs() <= 1e-6 * numeric.abs().max(analytic.abs()).max(1.0),
                "coord {coord}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn detached_constant_blocks_gradients() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[1.0, 2.0], [3.0, 4.0]]);
        let mut tape = Tape::new(&store);
        let wv = tape.param(w);
        let detached_value = tape.value(wv).clone();
        let detached = tape.constant(detached_value);
        let s = tape.sum_all(detached);
        let mut grads = GradStore::zeros_like(&store);
        tape.backward(s, &mut grads);
        assert_eq!(grads.get(w).sum(), 0.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[0.1, 5.0, -2.0], [3.0, 3.0, 3.0]]);
        let mut tape = Tape::new(&store);
        let wv = tape.param(w);
        let s = tape.softmax_rows(wv);
        for row in tape.value(s).rows() {
            assert_relative_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bce_on_half_probs_is_ln_two() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let z = tape.constant(Array2::zeros((4, 1)));
        let l = tape.bce_logits(z, vec![1.0, 0.0, 1.0, 0.0]);
        assert_relative_eq!(tape.scalar(l), std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn masked_ce_ignores_unmasked_rows_and_handles_empty() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let z = tape.constant(array![[0.0, 0.0], [100.0, 0.0]]);
        let l = tape.masked_ce(z, vec![0, 0], vec![true, false]);
        assert_relative_eq!(tape.scalar(l), std::f64::consts::LN_2, epsilon = 1e-12);
        let l0 = tape.masked_ce(z, vec![0, 0], vec![false, false]);
        assert_eq!(tape.scalar(l0), 0.0);
    }
}
