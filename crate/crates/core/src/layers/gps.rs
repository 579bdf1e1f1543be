//! Hybrid block: `X' = MLP(MPNN(X, E) + MHA(X))`. Edge attributes pass through unchanged.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Attention, AttentionConfig, Bound, GraphContext, Linear, MpnnLayer, MpnnLayerConfig, ParamStore};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpsBlock {
    pub mpnn: MpnnLayer,
    pub attention: Attention,
    /// Hidden width `2 * d_h`, rectifier.
    pub mlp_hidden: Linear,
    pub mlp_out: Linear,
}

impl GpsBlock {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, mpnn: MpnnLayerConfig, heads: usize, rng: &mut R) -> Result<Self> {
        if mpnn.d_in != mpnn.d_out {
            return Err(Error::InvalidConfig(format!("{name}: hybrid block needs equal input and output widths")));
        }
        let d = mpnn.d_out;
        let attention = Attention::new(store, &format!("{name}.attention"), AttentionConfig::for_hidden(d, heads)?, rng)?;
        let mpnn = MpnnLayer::new(store, &format!("{name}.mpnn"), mpnn, rng)?;
        let mlp_hidden = Linear::new(store, &format!("{name}.mlp.0"), d, 2 * d, true, rng);
        let mlp_out = Linear::new(store, &format!("{name}.mlp.1"), 2 * d, d, true, rng);
        Ok(Self { mpnn, attention, mlp_hidden, mlp_out })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        ctx: &GraphContext,
        x: Var,
        edges: Option<Var>,
        geometry: Option<&Tensor>,
    ) -> Result<Var> {
        let local = self.mpnn.forward(tape, p, ctx, x, edges, geometry)?;
        let global = self.attention.forward(tape, p, &ctx.node_offsets, x)?;
        let sum = tape.add(local, global);
        let z = self.mlp_hidden.forward(tape, p, sum);
        let z = tape.relu(z);
        Ok(self.mlp_out.forward(tape, p, z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AtomGraph;
    use crate::layers::LayerKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_value_projection_leaves_mlp_of_local_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let block = GpsBlock::new(&mut store, "b", MpnnLayerConfig::new(LayerKind::EdgeConditioned, 4, 4, 0), 2, &mut rng).unwrap();
        for &v in &block.attention.w_v {
            store.get_mut(v).data_mut().fill(0.0);
        }
        let g = AtomGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let ctx = GraphContext::from_graph(&g);
        let h = Tensor::from_vec(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();

        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.constant(h.clone());
        let out = block.forward(&mut tape, &p, &ctx, x, None, None).unwrap();
        let local = block.mpnn.forward(&mut tape, &p, &ctx, x, None, None).unwrap();
        let z = block.mlp_hidden.forward(&mut tape, &p, local);
        let z = tape.relu(z);
        let want = block.mlp_out.forward(&mut tape, &p, z);
        assert_eq!(tape.value(out), tape.value(want));
    }

    #[test]
    fn one_node_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let block = GpsBlock::new(&mut store, "b", MpnnLayerConfig::new(LayerKind::EdgeConditioned, 1, 1, 0), 1, &mut rng).unwrap();
        let set = |store: &mut ParamStore, id, vals: &[f64]| store.get_mut(id).data_mut().copy_from_slice(vals);
        let m = &block.mpnn;
        set(&mut store, m.message.weight, &[0.3]);
        set(&mut store, m.message.bias.unwrap(), &[0.1]);
        set(&mut store, m.update_hidden.weight, &[0.8, -0.5]);
        set(&mut store, m.update_hidden.bias.unwrap(), &[0.2]);
        set(&mut store, m.update_out.weight, &[1.1]);
        set(&mut store, m.update_out.bias.unwrap(), &[-0.3]);
        let a = &block.attention;
        set(&mut store, a.w_q[0], &[0.4]);
        set(&mut store, a.w_k[0], &[-0.7]);
        set(&mut store, a.w_v[0], &[0.6]);
        set(&mut store, a.w_o, &[1.5]);
        set(&mut store, block.mlp_hidden.weight, &[1.0, -2.0]);
        set(&mut store, block.mlp_hidden.bias.unwrap(), &[0.0, 0.5]);
        set(&mut store, block.mlp_out.weight, &[0.25, 0.75]);
        set(&mut store, block.mlp_out.bias.unwrap(), &[0.01]);

        let x0 = 0.9;
        let silu = |x: f64| x / (1.0 + (-x).exp());
        let local = 1.1 * silu(0.8 * x0 + 0.2) - 0.3 + x0;
        let global = 1.5 * 0.6 * x0;
        let s = local + global;
        let want = 0.25 * s.max(0.0) + 0.75 * (-2.0 * s + 0.5).max(0.0) + 0.01;

        let g = AtomGraph::from_edges(1, &[]).unwrap();
        let ctx = GraphContext::from_graph(&g);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.constant(Tensor::scalar(x0));
        let out = block.forward(&mut tape, &p, &ctx, x, None, None).unwrap();
        assert!((tape.value(out).item() - want).abs() < 1e-14);
    }
}
