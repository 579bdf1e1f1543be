//! Single bias-free projections fusing the enabled channels into node and edge inputs.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Bound, Linear, ParamStore};
use crate::numerics::{Tape, Tensor, Var};

/// The four pipelines selected by the attention and encoder switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Message passing on raw inputs.
    S1,
    /// Encoders, then message passing.
    S2,
    /// Laplacian encodings, then hybrid blocks.
    S3,
    /// All encoders, then hybrid blocks.
    S4,
}

impl Scheme {
    pub fn from_switches(use_attention: bool, use_encodings: bool) -> Self {
        match (use_attention, use_encodings) {
            (false, false) => Scheme::S1,
            (false, true) => Scheme::S2,
            (true, false) => Scheme::S3,
            (true, true) => Scheme::S4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::S1 => "S1",
            Scheme::S2 => "S2",
            Scheme::S3 => "S3",
            Scheme::S4 => "S4",
        }
    }

    pub fn uses_attention(self) -> bool {
        matches!(self, Scheme::S3 | Scheme::S4)
    }

    pub fn uses_encodings(self) -> bool {
        matches!(self, Scheme::S2 | Scheme::S4)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Input channels: raw node features X, raw edge features E, positions R,
/// Laplacian encodings L, node topology P, chemistry C, edge topology G.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ChannelSet(u8);

impl ChannelSet {
    pub const X: Self = Self(1);
    pub const E: Self = Self(1 << 1);
    pub const R: Self = Self(1 << 2);
    pub const L: Self = Self(1 << 3);
    pub const P: Self = Self(1 << 4);
    pub const C: Self = Self(1 << 5);
    pub const G: Self = Self(1 << 6);
    const NAMES: [(Self, &'static str); 7] =
        [(Self::X, "X"), (Self::E, "E"), (Self::R, "R"), (Self::L, "L"), (Self::P, "P"), (Self::C, "C"), (Self::G, "G")];

    pub const fn empty() -> Self {
        Self(0)
    }

    pub const fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn of(channels: &[Self]) -> Self {
        channels.iter().fold(Self::empty(), |a, &b| a.union(b))
    }

    pub fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_subset(self, other: Self) -> bool {
        other.contains(self)
    }
}

impl fmt::Display for ChannelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = Self::NAMES.iter().filter(|(c, _)| self.contains(*c)).map(|(_, n)| *n).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeMode {
    /// Edge topology G concatenated with raw E.
    Topological,
    /// `|L_u - L_v|` concatenated with raw E.
    SpectralDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub scheme: Scheme,
    pub hidden: usize,
    /// 0 passes raw edge attributes through unprojected.
    pub edge_embed_dim: usize,
    pub node_feature_dim: usize,
    pub edge_feature_dim: usize,
    pub lpe_dim: usize,
}

impl EmbedderConfig {
    /// Node channels in concatenation order X, L, P, C with their widths.
    pub fn node_channels(&self) -> Vec<(ChannelSet, usize)> {
        let mut out = vec![(ChannelSet::X, self.node_feature_dim)];
        if self.scheme != Scheme::S1 {
            out.push((ChannelSet::L, self.lpe_dim));
        }
        if self.scheme.uses_encodings() {
            out.push((ChannelSet::P, crate::encoders::NODE_TOPO_WIDTH));
            out.push((ChannelSet::C, crate::encoders::CHEMICAL_WIDTH));
        }
        out
    }

    pub fn d_node_in(&self) -> usize {
        self.node_channels().iter().map(|c| c.1).sum()
    }

    /// Width of node states leaving the embedder.
    pub fn d_node_out(&self) -> usize {
        if self.scheme == Scheme::S1 {
            self.node_feature_dim
        } else {
            self.hidden
        }
    }

    pub fn edge_mode(&self) -> Option<EdgeMode> {
        match (self.edge_embed_dim, self.scheme) {
            (0, _) | (_, Scheme::S1) => None,
            (_, Scheme::S3) => Some(EdgeMode::SpectralDifference),
            _ => Some(EdgeMode::Topological),
        }
    }

    pub fn d_edge_in(&self) -> usize {
        match self.edge_mode() {
            None => self.edge_feature_dim,
            Some(EdgeMode::Topological) => crate::encoders::EDGE_TOPO_WIDTH + self.edge_feature_dim,
            Some(EdgeMode::SpectralDifference) => self.lpe_dim + self.edge_feature_dim,
        }
    }

    /// Width of edge attributes leaving the embedder.
    pub fn d_edge_out(&self) -> usize {
        match self.edge_mode() {
            None => self.edge_feature_dim,
            Some(_) => self.edge_embed_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme == Scheme::S1 && self.edge_embed_dim > 0 {
            return Err(Error::InvalidConfig("edge embedding needs encoder or attention channels; set edge_embed_dim = 0 for S1".into()));
        }
        if self.scheme != Scheme::S1 && self.lpe_dim == 0 {
            return Err(Error::InvalidConfig(format!("scheme {} needs a positive laplacian encoding width", self.scheme)));
        }
        if self.scheme != Scheme::S1 && self.hidden == 0 {
            return Err(Error::InvalidConfig("hidden width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedder {
    pub config: EmbedderConfig,
    pub node: Option<Linear>,
    pub edge: Option<Linear>,
}

fn check_width(channel: &'static str, t: &Tensor, expected: usize) -> Result<()> {
    if t.cols() != expected {
        return Err(Error::ChannelWidth { channel, expected, got: t.cols() });
    }
    Ok(())
}

fn channel_name(c: ChannelSet) -> &'static str {
    ChannelSet::NAMES.iter().find(|(k, _)| *k == c).map_or("?", |(_, n)| n)
}

impl Embedder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: EmbedderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let node = (config.scheme != Scheme::S1).then(|| Linear::new(store, "embed.node", config.d_node_in(), config.hidden, false, rng));
        let edge = config.edge_mode().map(|_| Linear::new(store, "embed.edge", config.d_edge_in(), config.edge_embed_dim, false, rng));
        Ok(Self { config, node, edge })
    }

    /// `channels` supplies one matrix per channel of [`EmbedderConfig::node_channels`], in order.
    /// Under S1 the raw features are returned as they are.
    pub fn embed_nodes(&self, tape: &mut Tape, p: &Bound, channels: &[(ChannelSet, Var)]) -> Result<Var> {
        let want = self.config.node_channels();
        for (i, &(c, w)) in want.iter().enumerate() {
            let Some(&(got, v)) = channels.get(i) else {
                return Err(Error::MissingChannel { channel: channel_name(c), scheme: self.config.scheme.name() });
            };
            if got != c {
                return Err(Error::MissingChannel { channel: channel_name(c), scheme: self.config.scheme.name() });
            }
            check_width(channel_name(c), tape.value(v), w)?;
        }
        let Some(node) = &self.node else { return Ok(channels[0].1) };
        let parts: Vec<Var> = channels.iter().map(|c| c.1).collect();
        let z = tape.concat_cols(&parts);
        Ok(node.forward(tape, p, z))
    }

    /// Edge input matrix before projection, or the raw attributes when no projection applies.
    pub fn edge_inputs(&self, edges: &[(usize, usize)], raw: &Tensor, topo: Option<&Tensor>, lpe: Option<&Tensor>) -> Result<Tensor> {
        let cfg = &self.config;
        check_width("E", raw, cfg.edge_feature_dim)?;
        let extra = match cfg.edge_mode() {
            None => return Ok(raw.clone()),
            Some(EdgeMode::Topological) => {
                let g = topo.ok_or(Error::MissingChannel { channel: "G", scheme: cfg.scheme.name() })?;
                check_width("G", g, crate::encoders::EDGE_TOPO_WIDTH)?;
                g.clone()
            }
            Some(EdgeMode::SpectralDifference) => {
                let l = lpe.ok_or(Error::MissingChannel { channel: "L", scheme: cfg.scheme.name() })?;
                check_width("L", l, cfg.lpe_dim)?;
                spectral_difference(edges, l)
            }
        };
        Tensor::concat_cols(&[&extra, raw])
    }

    /// Projects prepared edge inputs; a pass-through when no edge projection exists.
    pub fn embed_edges(&self, tape: &mut Tape, p: &Bound, inputs: Var) -> Var {
        match &self.edge {
            Some(l) => l.forward(tape, p, inputs),
            None => inputs,
        }
    }
}

/// `|L_u - L_v|` per edge.
pub fn spectral_difference(edges: &[(usize, usize)], lpe: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(edges.len(), lpe.cols());
    for (k, &(u, v)) in edges.iter().enumerate() {
        for (o, (a, b)) in out.row_mut(k).iter_mut().zip(lpe.row(u).iter().zip(lpe.row(v))) {
            *o = (a - b).abs();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(scheme: Scheme) -> EmbedderConfig {
        EmbedderConfig { scheme, hidden: 8, edge_embed_dim: 0, node_feature_dim: 9, edge_feature_dim: 1, lpe_dim: 5 }
    }

    #[test]
    fn width_arithmetic() {
        assert_eq!(cfg(Scheme::S4).d_node_in(), 38);
        assert_eq!(cfg(Scheme::S3).d_node_in(), 14);
        assert_eq!(cfg(Scheme::S1).d_node_in(), 9);
        let c = EmbedderConfig { edge_embed_dim: 4, ..cfg(Scheme::S3) };
        assert_eq!(c.d_edge_in(), 6);
    }

    #[test]
    fn s1_is_identity_on_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let e = Embedder::new(&mut store, cfg(Scheme::S1), &mut rng).unwrap();
        assert_eq!(store.len(), 0);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = Tensor::from_vec(2, 9, (0..18).map(|i| i as f64 * 0.1).collect()).unwrap();
        let xv = tape.constant(x.clone());
        let out = e.embed_nodes(&mut tape, &p, &[(ChannelSet::X, xv)]).unwrap();
        assert_eq!(tape.value(out), &x);
    }

    #[test]
    fn exactly_one_projection_per_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let c = EmbedderConfig { edge_embed_dim: 3, ..cfg(Scheme::S4) };
        let e = Embedder::new(&mut store, c, &mut rng).unwrap();
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let chans: Vec<(ChannelSet, Var)> =
            e.config.node_channels().iter().map(|&(c, w)| (c, tape.constant(Tensor::filled(3, w, 0.5)))).collect();
        let before = tape.matmul_count();
        e.embed_nodes(&mut tape, &p, &chans).unwrap();
        assert_eq!(tape.matmul_count(), before + 1);
        let inputs = e.edge_inputs(&[(0, 1)], &Tensor::column(&[1.0]), Some(&Tensor::filled(1, 4, 0.1)), None).unwrap();
        let iv = tape.constant(inputs);
        e.embed_edges(&mut tape, &p, iv);
        assert_eq!(tape.matmul_count(), before + 2);
    }

    #[test]
    fn zero_rows_map_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let e = Embedder::new(&mut store, cfg(Scheme::S4), &mut rng).unwrap();
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let chans: Vec<(ChannelSet, Var)> =
            e.config.node_channels().iter().map(|&(c, w)| (c, tape.constant(Tensor::zeros(2, w)))).collect();
        let out = e.embed_nodes(&mut tape, &p, &chans).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn width_mismatch_names_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let e = Embedder::new(&mut store, cfg(Scheme::S3), &mut rng).unwrap();
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.constant(Tensor::zeros(2, 9));
        let l = tape.constant(Tensor::zeros(2, 4));
        assert!(matches!(
            e.embed_nodes(&mut tape, &p, &[(ChannelSet::X, x), (ChannelSet::L, l)]),
            Err(Error::ChannelWidth { channel: "L", expected: 5, got: 4 })
        ));
        assert!(matches!(e.embed_nodes(&mut tape, &p, &[(ChannelSet::X, x)]), Err(Error::MissingChannel { channel: "L", .. })));
    }

    #[test]
    fn spectral_difference_is_symmetric_and_zero_on_equal_rows() {
        let l = Tensor::from_rows(&[vec![0.3, -0.2], vec![0.3, -0.2], vec![-0.5, 0.9]], 2).unwrap();
        let d = spectral_difference(&[(0, 1), (0, 2), (2, 0)], &l);
        assert_eq!(d.row(0), &[0.0, 0.0]);
        assert_eq!(d.row(1), d.row(2));
    }

    #[test]
    fn spectral_mode_without_lpe_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let e = Embedder::new(&mut store, EmbedderConfig { edge_embed_dim: 2, ..cfg(Scheme::S3) }, &mut rng).unwrap();
        assert!(matches!(
            e.edge_inputs(&[(0, 1)], &Tensor::column(&[1.0]), None, None),
            Err(Error::MissingChannel { channel: "L", scheme: "S3" })
        ));
    }

    #[test]
    fn raw_edges_pass_through_when_unprojected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let e = Embedder::new(&mut store, cfg(Scheme::S3), &mut rng).unwrap();
        let raw = Tensor::column(&[1.25, 2.5]);
        assert_eq!(e.edge_inputs(&[(0, 1), (1, 2)], &raw, None, None).unwrap(), raw);
    }
}
