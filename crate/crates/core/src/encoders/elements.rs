//! Per-element physico-chemical descriptors.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const PROPERTY_COUNT: usize = 15;
pub const MAX_Z: u32 = 86;

pub const PROPERTY_NAMES: [&str; PROPERTY_COUNT] = [
    "atomic_weight",
    "group",
    "period",
    "block",
    "valence_electrons",
    "covalent_radius",
    "vdw_radius",
    "en_pauling",
    "en_allen",
    "electron_affinity",
    "first_ionization_energy",
    "melting_point",
    "boiling_point",
    "density",
    "atomic_volume",
];

const BUNDLED: &str = include_str!("../../data/elements.csv");

/// Rows indexed by `Z - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementTable {
    rows: Vec<[f64; PROPERTY_COUNT]>,
}

impl ElementTable {
    /// The table shipped with the crate, parsed once.
    pub fn bundled() -> &'static ElementTable {
        static TABLE: OnceLock<ElementTable> = OnceLock::new();
        TABLE.get_or_init(|| Self::parse(BUNDLED).expect("bundled element table is well formed"))
    }

    /// Parses `#`-commented CSV with a `z` column followed by the 15 properties in order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::ElementTable(e.to_string()))?.clone();
        let expected: Vec<&str> = std::iter::once("z").chain(PROPERTY_NAMES).collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::ElementTable(format!("header must be {}", expected.join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::ElementTable(e.to_string()))?;
            let z: u32 = rec[0].parse().map_err(|_| Error::ElementTable(format!("record {}: bad z `{}`", i + 1, &rec[0])))?;
            if z as usize != rows.len() + 1 {
                return Err(Error::ElementTable(format!("record {}: expected z = {}, got {z}", i + 1, rows.len() + 1)));
            }
            let mut row = [0.0; PROPERTY_COUNT];
            for (k, slot) in row.iter_mut().enumerate() {
                let v: f64 =
                    rec[k + 1].parse().map_err(|_| Error::ElementTable(format!("z = {z}: `{}` is not a number", PROPERTY_NAMES[k])))?;
                if !v.is_finite() {
                    return Err(Error::ElementTable(format!("z = {z}: `{}` is not finite", PROPERTY_NAMES[k])));
                }
                *slot = v;
            }
            rows.push(row);
        }
        if rows.len() != MAX_Z as usize {
            return Err(Error::ElementTable(format!("expected {MAX_Z} elements, found {}", rows.len())));
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, z: u32) -> Option<&[f64; PROPERTY_COUNT]> {
        (z >= 1).then(|| self.rows.get(z as usize - 1)).flatten()
    }
}

/// `N x 15` descriptor matrix, one table row per atom.
pub fn chemical_descriptors(atomic_numbers: &[u32], table: &ElementTable) -> Result<Tensor> {
    let mut out = Tensor::zeros(atomic_numbers.len(), PROPERTY_COUNT);
    for (node, &z) in atomic_numbers.iter().enumerate() {
        let row = table.row(z).ok_or(Error::UnsupportedElement { z, node })?;
        out.row_mut(node).copy_from_slice(row);
    }
    Ok(out)
}
