//! Dense multi-head scaled dot-product self-attention, restricted to each graph
//! of a batch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Bound, ParamId, ParamStore};
use crate::numerics::{softmax_rows, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub d_in: usize,
    pub heads: usize,
    pub d_head: usize,
    pub d_out: usize,
}

impl AttentionConfig {
    /// `heads` heads of width `hidden / heads`, mapping `hidden -> hidden`.
    pub fn for_hidden(hidden: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !hidden.is_multiple_of(heads) {
            return Err(Error::HeadDivisibility { hidden, heads });
        }
        Ok(Self { d_in: hidden, heads, d_head: hidden / heads, d_out: hidden })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub config: AttentionConfig,
    pub w_q: Vec<ParamId>,
    pub w_k: Vec<ParamId>,
    pub w_v: Vec<ParamId>,
    pub w_o: ParamId,
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, config: AttentionConfig, rng: &mut R) -> Result<Self> {
        if config.heads == 0 || config.d_head == 0 {
            return Err(Error::HeadDivisibility { hidden: config.heads * config.d_head, heads: config.heads });
        }
        let mut proj = |kind: &str| -> Vec<ParamId> {
            (0..config.heads).map(|b| store.add_glorot(format!("{name}.head{b}.{kind}"), config.d_in, config.d_head, rng)).collect()
        };
        let w_q = proj("query");
        let w_k = proj("key");
        let w_v = proj("value");
        let w_o = store.add_glorot(format!("{name}.out"), config.heads * config.d_head, config.d_out, rng);
        Ok(Self { config, w_q, w_k, w_v, w_o })
    }

    /// `h`: `N x d_in`; `offsets`: `G + 1` node offsets delimiting the graphs.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, offsets: &[usize], h: Var) -> Result<Var> {
        let (n, d) = tape.shape(h);
        if d != self.config.d_in || offsets.last() != Some(&n) {
            return Err(Error::Shape { op: "multi_head_attention", detail: format!("input {n}x{d}, offsets end at {:?}", offsets.last()) });
        }
        let scale = 1.0 / (self.config.d_head as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.heads);
        for b in 0..self.config.heads {
            let q = tape.matmul(h, p[self.w_q[b]]);
            let k = tape.matmul(h, p[self.w_k[b]]);
            let v = tape.matmul(h, p[self.w_v[b]]);
            let mut blocks = Vec::with_capacity(offsets.len() - 1);
            for w in offsets.windows(2) {
                let (start, len) = (w[0], w[1] - w[0]);
                let (qg, kg, vg) = (tape.slice_rows(q, start, len), tape.slice_rows(k, start, len), tape.slice_rows(v, start, len));
                let kt = tape.transpose(kg);
                let logits = tape.matmul(qg, kt);
                let logits = tape.scale(logits, scale);
                let weights = tape.softmax_rows(logits);
                blocks.push(tape.matmul(weights, vg));
            }
            heads.push(tape.concat_rows(&blocks));
        }
        let cat = tape.concat_cols(&heads);
        Ok(tape.matmul(cat, p[self.w_o]))
    }

    /// Attention weight matrices, indexed `[head][graph]`.
    pub fn weights(&self, store: &ParamStore, offsets: &[usize], h: &Tensor) -> Result<Vec<Vec<Tensor>>> {
        let scale = 1.0 / (self.config.d_head as f64).sqrt();
        (0..self.config.heads)
            .map(|b| {
                let q = h.matmul(store.get(self.w_q[b]))?;
                let k = h.matmul(store.get(self.w_k[b]))?;
                Ok(offsets
                    .windows(2)
                    .map(|w| {
                        let (qg, kg) = (q.slice_rows(w[0], w[1] - w[0]), k.slice_rows(w[0], w[1] - w[0]));
                        softmax_rows(&qg.matmul_t(&kg).scale(scale))
                    })
                    .collect())
            })
            .collect()
    }

    pub fn parameter_count(config: &AttentionConfig) -> usize {
        3 * config.heads * config.d_in * config.d_head + config.heads * config.d_head * config.d_out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn forward(att: &Attention, store: &ParamStore, offsets: &[usize], h: &Tensor) -> Tensor {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let hv = tape.constant(h.clone());
        let out = att.forward(&mut tape, &p, offsets, hv).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn divisibility() {
        assert!(matches!(AttentionConfig::for_hidden(30, 4), Err(Error::HeadDivisibility { hidden: 30, heads: 4 })));
        assert_eq!(AttentionConfig::for_hidden(32, 4).unwrap().d_head, 8);
    }

    #[test]
    fn rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let att = Attention::new(&mut store, "a", AttentionConfig::for_hidden(8, 2).unwrap(), &mut rng).unwrap();
        let h = random(&mut rng, 5, 8);
        for head in att.weights(&store, &[0, 5], &h).unwrap() {
            for w in head {
                for r in 0..w.rows() {
                    assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                    assert!(w.row(r).iter().all(|&x| x >= 0.0));
                }
            }
        }
    }

    #[test]
    fn zero_queries_average_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let att = Attention::new(&mut store, "a", AttentionConfig::for_hidden(6, 3).unwrap(), &mut rng).unwrap();
        for &q in &att.w_q {
            store.get_mut(q).data_mut().fill(0.0);
        }
        store.get_mut(att.w_o).data_mut().fill(0.0);
        // Identity output projection exposes the concatenated heads.
        for i in 0..6 {
            store.get_mut(att.w_o).set(i, i, 1.0);
        }
        let h = random(&mut rng, 4, 6);
        let out = forward(&att, &store, &[0, 4], &h);
        for b in 0..3 {
            let v = h.matmul(store.get(att.w_v[b])).unwrap();
            for c in 0..2 {
                let mean = (0..4).map(|r| v.get(r, c)).sum::<f64>() / 4.0;
                for r in 0..4 {
                    assert!((out.get(r, 2 * b + c) - mean).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn single_node_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let att = Attention::new(&mut store, "a", AttentionConfig::for_hidden(4, 2).unwrap(), &mut rng).unwrap();
        let h = random(&mut rng, 1, 4);
        let out = forward(&att, &store, &[0, 1], &h);
        let v: Vec<Tensor> = att.w_v.iter().map(|&w| h.matmul(store.get(w)).unwrap()).collect();
        let cat = Tensor::concat_cols(&v.iter().collect::<Vec<_>>()).unwrap();
        assert!(out.max_abs_diff(&cat.matmul(store.get(att.w_o)).unwrap()) <= 1e-14);
    }

    #[test]
    fn graphs_in_a_batch_do_not_attend_to_each_other() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let att = Attention::new(&mut store, "a", AttentionConfig::for_hidden(4, 2).unwrap(), &mut rng).unwrap();
        let (a, b) = (random(&mut rng, 3, 4), random(&mut rng, 2, 4));
        let both = forward(&att, &store, &[0, 3, 5], &Tensor::concat_rows(&[&a, &b]).unwrap());
        assert!(both.slice_rows(0, 3).max_abs_diff(&forward(&att, &store, &[0, 3], &a)) <= 1e-15);
        assert!(both.slice_rows(3, 2).max_abs_diff(&forward(&att, &store, &[0, 2], &b)) <= 1e-15);
    }

    #[test]
    fn parameter_count_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = AttentionConfig { d_in: 5, heads: 3, d_head: 2, d_out: 7 };
        let mut store = ParamStore::new();
        Attention::new(&mut store, "a", cfg, &mut rng).unwrap();
        assert_eq!(store.scalar_count(), Attention::parameter_count(&cfg));
        let mut one_more = ParamStore::new();
        Attention::new(&mut one_more, "a", AttentionConfig { heads: 4, ..cfg }, &mut rng).unwrap();
        assert_eq!(one_more.scalar_count() - store.scalar_count(), 3 * 5 * 2 + 2 * 7);
    }
}
