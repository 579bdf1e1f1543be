use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::GraphContext;
use crate::numerics::{Extreme, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolMode {
    Min,
    Max,
    Sum,
    #[default]
    Mean,
}

impl std::str::FromStr for PoolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Self::Min),
            "max" => Ok(Self::Max),
            "sum" => Ok(Self::Sum),
            "mean" => Ok(Self::Mean),
            _ => Err(Error::InvalidConfig(format!("unknown pooling mode `{s}`"))),
        }
    }
}

/// Per-graph reduction of node rows, `G x d`.
pub fn pool(tape: &mut Tape, ctx: &GraphContext, h: Var, mode: PoolMode) -> Result<Var> {
    let g = ctx.graph_count();
    if let Some(empty) = ctx.node_offsets.windows(2).position(|w| w[0] == w[1]) {
        return Err(Error::EmptyGraph(empty));
    }
    Ok(match mode {
        PoolMode::Sum => tape.scatter_add(h, &ctx.graph_index, g),
        PoolMode::Mean => {
            let s = tape.scatter_add(h, &ctx.graph_index, g);
            let inv: Vec<f64> = ctx.node_offsets.windows(2).map(|w| 1.0 / (w[1] - w[0]) as f64).collect();
            let inv = tape.constant(Tensor::column(&inv));
            tape.mul_col(s, inv)
        }
        PoolMode::Max => tape.segment_extreme(h, &ctx.graph_index, g, Extreme::Max),
        PoolMode::Min => tape.segment_extreme(h, &ctx.graph_index, g, Extreme::Min),
    })
}
