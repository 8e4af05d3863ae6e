//! Cell types, operation vocabularies, the softmax relaxation over
//! architecture weights, search-space cardinality and discretization.

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::autodiff::softmax;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellType {
    #[serde(rename = "e")]
    Encoding,
    #[serde(rename = "r")]
    Residual,
    #[serde(rename = "d")]
    Decoding,
}

impl CellType {
    pub const ALL: [CellType; 3] = [CellType::Encoding, CellType::Residual, CellType::Decoding];

    pub fn symbol(self) -> char {
        match self {
            CellType::Encoding => 'e',
            CellType::Residual => 'r',
            CellType::Decoding => 'd',
        }
    }

    pub fn operations(self) -> &'static [OperationKind] {
        operation_set(self)
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellType::Encoding => "encoding",
            CellType::Residual => "residual",
            CellType::Decoding => "decoding",
        })
    }
}

/// A searchable operation with its fixed hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperationKind {
    #[serde(rename = "max_pool")]
    MaxPool,
    #[serde(rename = "avg_pool")]
    AvgPool,
    #[serde(rename = "conv3x3")]
    Conv3x3,
    #[serde(rename = "conv4x4")]
    Conv4x4,
    #[serde(rename = "conv5x5")]
    Conv5x5,
    #[serde(rename = "conv7x7")]
    Conv7x7,
    #[serde(rename = "dilconv3x3")]
    DilConv3x3,
    #[serde(rename = "dilconv5x5")]
    DilConv5x5,
    #[serde(rename = "nearest")]
    Nearest,
    #[serde(rename = "bilinear")]
    Bilinear,
    #[serde(rename = "transconv3x3")]
    TransConv3x3,
}

const ENCODING_OPS: [OperationKind; 8] = [
    OperationKind::MaxPool,
    OperationKind::AvgPool,
    OperationKind::Conv3x3,
    OperationKind::Conv4x4,
    OperationKind::Conv5x5,
    OperationKind::Conv7x7,
    OperationKind::DilConv3x3,
    OperationKind::DilConv5x5,
];

const RESIDUAL_OPS: [OperationKind; 5] = [
    OperationKind::Conv3x3,
    OperationKind::Conv5x5,
    OperationKind::Conv7x7,
    OperationKind::DilConv3x3,
    OperationKind::DilConv5x5,
];

const DECODING_OPS: [OperationKind; 3] = [
    OperationKind::Nearest,
    OperationKind::Bilinear,
    OperationKind::TransConv3x3,
];

/// The candidate operations of a cell type in canonical order.
pub fn operation_set(cell_type: CellType) -> &'static [OperationKind] {
    match cell_type {
        CellType::Encoding => &ENCODING_OPS,
        CellType::Residual => &RESIDUAL_OPS,
        CellType::Decoding => &DECODING_OPS,
    }
}

impl OperationKind {
    pub const ALL: [OperationKind; 11] = [
        OperationKind::MaxPool,
        OperationKind::AvgPool,
        OperationKind::Conv3x3,
        OperationKind::Conv4x4,
        OperationKind::Conv5x5,
        OperationKind::Conv7x7,
        OperationKind::DilConv3x3,
        OperationKind::DilConv5x5,
        OperationKind::Nearest,
        OperationKind::Bilinear,
        OperationKind::TransConv3x3,
    ];

    /// Canonical name used in documents and parameter names.
    pub fn name(self) -> &'static str {
        match self {
            OperationKind::MaxPool => "max_pool",
            OperationKind::AvgPool => "avg_pool",
            OperationKind::Conv3x3 => "conv3x3",
            OperationKind::Conv4x4 => "conv4x4",
            OperationKind::Conv5x5 => "conv5x5",
            OperationKind::Conv7x7 => "conv7x7",
            OperationKind::DilConv3x3 => "dilconv3x3",
            OperationKind::DilConv5x5 => "dilconv5x5",
            OperationKind::Nearest => "nearest",
            OperationKind::Bilinear => "bilinear",
            OperationKind::TransConv3x3 => "transconv3x3",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    pub fn allowed_in(self, cell_type: CellType) -> bool {
        operation_set(cell_type).contains(&self)
    }

    /// Position in the cell type's canonical list.
    pub fn index_in(self, cell_type: CellType) -> Option<usize> {
        operation_set(cell_type).iter().position(|&op| op == self)
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Softmax relaxation `β_o = exp(α_o) / Σ_p exp(α_p)`.
pub fn mixture_weights(alpha: &[f64]) -> Vec<f64> {
    softmax(alpha)
}

/// Shannon entropy (nats) of a probability vector.
pub fn entropy(beta: &[f64]) -> f64 {
    -beta
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Generator,
    Discriminator,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Generator => "generator",
            Role::Discriminator => "discriminator",
        })
    }
}

/// Ordered cell types for a network of `role` with `n_cells` cells.
pub fn cell_layout(role: Role, n_cells: usize) -> Result<Vec<CellType>> {
    match role {
        Role::Generator => {
            if n_cells < 3 {
                return Err(Error::InvalidSpec(format!(
                    "a generator needs at least 3 cells, got {n_cells}"
                )));
            }
            let mut cells = vec![CellType::Encoding];
            cells.extend(std::iter::repeat_n(CellType::Residual, n_cells - 2));
            cells.push(CellType::Decoding);
            Ok(cells)
        }
        Role::Discriminator => {
            if n_cells != 2 {
                return Err(Error::InvalidSpec(format!(
                    "a discriminator has exactly 2 cells, got {n_cells}"
                )));
            }
            Ok(vec![CellType::Encoding, CellType::Encoding])
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellSpec {
    #[serde(rename = "type")]
    pub cell_type: CellType,
    pub op1: OperationKind,
    pub op2: OperationKind,
}

impl CellSpec {
    pub fn ops(&self) -> [OperationKind; 2] {
        [self.op1, self.op2]
    }
}

/// A discrete architecture: the ordered cells of one network.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SpecDocument", into = "SpecDocument")]
pub struct ArchitectureSpec {
    pub role: Role,
    pub cells: Vec<CellSpec>,
    pub hidden_dim: usize,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDocument {
    role: Role,
    #[serde(rename = "N")]
    n: usize,
    hidden_dim: usize,
    cells: Vec<CellSpec>,
}

impl ArchitectureSpec {
    pub fn new(role: Role, cells: Vec<CellSpec>, hidden_dim: usize) -> Result<Self> {
        let spec = Self {
            role,
            cells,
            hidden_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Every cell uses the same pair of operations for its type.
    pub fn uniform(role: Role, n_cells: usize, hidden_dim: usize, pick: impl Fn(CellType) -> (OperationKind, OperationKind)) -> Result<Self> {
        let cells = cell_layout(role, n_cells)?
            .into_iter()
            .map(|t| {
                let (op1, op2) = pick(t);
                CellSpec {
                    cell_type: t,
                    op1,
                    op2,
                }
            })
            .collect();
        Self::new(role, cells, hidden_dim)
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::InvalidSpec("hidden_dim must be positive".into()));
        }
        let layout = cell_layout(self.role, self.cells.len())?;
        for (i, (cell, expected)) in self.cells.iter().zip(&layout).enumerate() {
            if cell.cell_type != *expected {
                return Err(Error::InvalidSpec(format!(
                    "cell {i}: expected a {expected} cell, found {}",
                    cell.cell_type
                )));
            }
            for (slot, op) in cell.ops().into_iter().enumerate() {
                if !op.allowed_in(cell.cell_type) {
                    return Err(Error::InvalidSpec(format!(
                        "cell {i}, op{}: {op} is not a {} operation",
                        slot + 1,
                        cell.cell_type
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpecDocument =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        doc.try_into()
    }

    /// Same cells with a different hidden dimension.
    pub fn with_hidden(&self, hidden_dim: usize) -> Self {
        Self {
            hidden_dim,
            ..self.clone()
        }
    }
}

impl From<ArchitectureSpec> for SpecDocument {
    fn from(spec: ArchitectureSpec) -> Self {
        Self {
            role: spec.role,
            n: spec.cells.len(),
            hidden_dim: spec.hidden_dim,
            cells: spec.cells,
        }
    }
}

impl TryFrom<SpecDocument> for ArchitectureSpec {
    type Error = Error;

    fn try_from(doc: SpecDocument) -> Result<Self> {
        if doc.n != doc.cells.len() {
            return Err(Error::InvalidSpec(format!(
                "N = {} but {} cells are listed",
                doc.n,
                doc.cells.len()
            )));
        }
        Self::new(doc.role, doc.cells, doc.hidden_dim)
    }
}

/// Which cardinality to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceRole {
    Generator(usize),
    Discriminator,
    /// Two generators of `n` cells and two discriminators.
    FullSystem(usize),
}

fn network_space(layout: &[CellType]) -> BigUint {
    layout
        .iter()
        .map(|t| BigUint::from(operation_set(*t).len()).pow(2u32))
        .product()
}

/// Exact number of distinct discrete architectures.
pub fn search_space_size(role: SpaceRole) -> Result<BigUint> {
    match role {
        SpaceRole::Generator(n) => Ok(network_space(&cell_layout(Role::Generator, n)?)),
        SpaceRole::Discriminator => Ok(network_space(&cell_layout(Role::Discriminator, 2)?)),
        SpaceRole::FullSystem(n) => {
            let g = search_space_size(SpaceRole::Generator(n))?;
            let d = search_space_size(SpaceRole::Discriminator)?;
            Ok(g.pow(2u32) * d.pow(2u32))
        }
    }
}

/// Formats an integer as `m.m×10^k` with two significant digits.
pub fn scientific(value: &BigUint) -> String {
    let digits = value.to_str_radix(10);
    if digits.len() == 1 {
        return format!("{digits}.0×10^0");
    }
    let bytes = digits.as_bytes();
    let lead = |i: usize| (bytes.get(i).copied().unwrap_or(b'0') - b'0') as u32;
    let mut mantissa = lead(0) * 10 + lead(1);
    if lead(2) >= 5 {
        mantissa += 1;
    }
    let mut exponent = digits.len() - 1;
    if mantissa == 100 {
        mantissa = 10;
        exponent += 1;
    }
    format!("{}.{}×10^{}", mantissa / 10, mantissa % 10, exponent)
}

/// Architecture weights of one cell: one vector per operation slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaCell {
    #[serde(rename = "type")]
    pub cell_type: CellType,
    pub alpha: [Vec<f64>; 2],
}

/// Continuous architecture weights for every slot of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaTable {
    pub role: Role,
    pub cells: Vec<AlphaCell>,
}

impl AlphaTable {
    /// All-zero weights, i.e. the uniform mixture.
    pub fn zeros(role: Role, n_cells: usize) -> Result<Self> {
        let cells = cell_layout(role, n_cells)?
            .into_iter()
            .map(|t| {
                let n = operation_set(t).len();
                AlphaCell {
                    cell_type: t,
                    alpha: [vec![0.0; n], vec![0.0; n]],
                }
            })
            .collect();
        Ok(Self { role, cells })
    }

    pub fn validate(&self) -> Result<()> {
        let layout = cell_layout(self.role, self.cells.len())?;
        for (i, (cell, expected)) in self.cells.iter().zip(&layout).enumerate() {
            if cell.cell_type != *expected {
                return Err(Error::InvalidSpec(format!(
                    "alpha cell {i}: expected a {expected} cell, found {}",
                    cell.cell_type
                )));
            }
            let n = operation_set(cell.cell_type).len();
            for (slot, a) in cell.alpha.iter().enumerate() {
                if a.len() != n {
                    return Err(Error::InvalidSpec(format!(
                        "alpha cell {i}, slot {}: {} weights for {n} operations",
                        slot + 1,
                        a.len()
                    )));
                }
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec(format!(
                        "alpha cell {i}, slot {}: non-finite weight",
                        slot + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("alpha serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }
}

/// Replaces every mixed operation with its highest-weight candidate.
pub fn discretize(
    role: Role,
    n_cells: usize,
    table: &AlphaTable,
    hidden_dim: usize,
) -> Result<ArchitectureSpec> {
    if table.role != role {
        return Err(invalid!("alpha table is for a {}, not a {role}", table.role));
    }
    if table.cells.len() != n_cells {
        return Err(Error::InvalidSpec(format!(
            "alpha table covers {} cells, expected {n_cells}",
            table.cells.len()
        )));
    }
    table.validate()?;
    let cells = table
        .cells
        .iter()
        .map(|cell| {
            let set = operation_set(cell.cell_type);
            CellSpec {
                cell_type: cell.cell_type,
                op1: set[argmax_first(&cell.alpha[0])],
                op2: set[argmax_first(&cell.alpha[1])],
            }
        })
        .collect();
    ArchitectureSpec::new(role, cells, hidden_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn operation_sets_follow_canonical_order() {
        let e = operation_set(CellType::Encoding);
        assert_eq!(e.len(), 8);
        assert_eq!(e[0], OperationKind::MaxPool);
        assert_eq!(
            operation_set(CellType::Residual),
            &[
                OperationKind::Conv3x3,
                OperationKind::Conv5x5,
                OperationKind::Conv7x7,
                OperationKind::DilConv3x3,
                OperationKind::DilConv5x5
            ]
        );
        let d = operation_set(CellType::Decoding);
        assert_eq!(d.len(), 3);
        assert_eq!(d[2], OperationKind::TransConv3x3);
        for op in OperationKind::ALL {
            assert!(CellType::ALL.iter().any(|&t| op.allowed_in(t)));
            assert_eq!(OperationKind::from_name(op.name()), Some(op));
        }
        // the residual set is a subset of the encoding convolutions
        for op in operation_set(CellType::Residual) {
            assert!(op.allowed_in(CellType::Encoding));
        }
    }

    #[test]
    fn mixture_weight_examples() {
        let b = mixture_weights(&[0.0; 3]);
        assert!(b.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let b = mixture_weights(&[8f64.ln(), 0.0, 0.0, 0.0, 0.0]);
        assert!((b[0] - 8.0 / 12.0).abs() < 1e-15);
        assert!(b[1..].iter().all(|v| (v - 1.0 / 12.0).abs() < 1e-15));
        let a = [0.3, -1.2, 2.0, 0.1, 0.0];
        let shifted: Vec<f64> = a.iter().map(|v| v + 5.0).collect();
        for (x, y) in mixture_weights(&a).iter().zip(mixture_weights(&shifted)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cardinality_examples() {
        let g11 = search_space_size(SpaceRole::Generator(11)).unwrap();
        assert_eq!(g11, BigUint::from(2_197_265_625_000_000u64));
        assert_eq!(scientific(&g11), "2.2×10^15");
        let d = search_space_size(SpaceRole::Discriminator).unwrap();
        assert_eq!(d, BigUint::from(4096u32));
        let full = search_space_size(SpaceRole::FullSystem(11)).unwrap();
        let expected = (BigUint::from(64u32) * BigUint::from(5u32).pow(18u32) * BigUint::from(9u32))
            .pow(2u32)
            * BigUint::from(4096u32).pow(2u32);
        assert_eq!(full, expected);
        assert_eq!(scientific(&full), "8.1×10^37");
        let g3 = search_space_size(SpaceRole::Generator(3)).unwrap();
        assert_eq!(g3, BigUint::from(14_400u32));
        assert_eq!(scientific(&g3), "1.4×10^4");
        assert!(search_space_size(SpaceRole::Generator(2)).is_err());
    }

    #[test]
    fn scientific_rounding_carries() {
        assert_eq!(scientific(&BigUint::from(996u32)), "1.0×10^3");
        assert_eq!(scientific(&BigUint::from(7u32)), "7.0×10^0");
        assert_eq!(scientific(&BigUint::from(12u32)), "1.2×10^1");
    }

    #[test]
    fn generator_cardinality_formula_and_enumeration() {
        for n in 3..=20u32 {
            let expected = BigUint::from(64u32) * BigUint::from(5u32).pow(2 * (n - 2)) * BigUint::from(9u32);
            assert_eq!(search_space_size(SpaceRole::Generator(n as usize)).unwrap(), expected);
        }
        // brute force: every N=3 generator spec is distinct and valid
        let mut seen = std::collections::HashSet::new();
        let pairs = |t: CellType| {
            let set = operation_set(t);
            set.iter()
                .flat_map(move |&a| set.iter().map(move |&b| (a, b)))
                .collect::<Vec<_>>()
        };
        for (e1, e2) in pairs(CellType::Encoding) {
            for (r1, r2) in pairs(CellType::Residual) {
                for (d1, d2) in pairs(CellType::Decoding) {
                    let cells = vec![
                        CellSpec { cell_type: CellType::Encoding, op1: e1, op2: e2 },
                        CellSpec { cell_type: CellType::Residual, op1: r1, op2: r2 },
                        CellSpec { cell_type: CellType::Decoding, op1: d1, op2: d2 },
                    ];
                    let spec = ArchitectureSpec::new(Role::Generator, cells, 4).unwrap();
                    seen.insert(spec);
                }
            }
        }
        assert_eq!(seen.len(), 14_400);
    }

    #[test]
    fn discretize_examples() {
        let mut table = AlphaTable::zeros(Role::Generator, 3).unwrap();
        table.cells[1].alpha[0] = vec![0.1, 2.0, -1.0, 0.0, 0.0];
        let spec = discretize(Role::Generator, 3, &table, 8).unwrap();
        assert_eq!(spec.cells[1].op1, OperationKind::Conv5x5);
        // all-zero slots resolve to the first operation
        assert_eq!(spec.cells[0].op1, OperationKind::MaxPool);
        assert_eq!(spec.cells[0].op2, OperationKind::MaxPool);
        assert_eq!(spec.cells[1].op2, OperationKind::Conv3x3);
        assert_eq!(spec.cells[2].op1, OperationKind::Nearest);

        assert!(discretize(Role::Generator, 4, &table, 8).is_err());
        let mut short = table.clone();
        short.cells[2].alpha[1].pop();
        assert!(discretize(Role::Generator, 3, &short, 8).is_err());
    }

    #[test]
    fn spec_documents_round_trip() {
        let gen = ArchitectureSpec::uniform(Role::Generator, 3, 8, |t| {
            let s = operation_set(t);
            (s[0], s[s.len() - 1])
        })
        .unwrap();
        assert_eq!(ArchitectureSpec::from_json(&gen.to_json()).unwrap(), gen);
        let disc = ArchitectureSpec::uniform(Role::Discriminator, 2, 16, |_| {
            (OperationKind::Conv4x4, OperationKind::AvgPool)
        })
        .unwrap();
        assert_eq!(ArchitectureSpec::from_json(&disc.to_json()).unwrap(), disc);
    }

    #[test]
    fn spec_documents_reject_bad_input() {
        let text = r#"{"role":"discriminator","N":2,"hidden_dim":8,"cells":[
            {"type":"e","op1":"conv3x3","op2":"Conv9x9"},
            {"type":"e","op1":"conv3x3","op2":"conv3x3"}]}"#;
        let err = ArchitectureSpec::from_json(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Conv9x9") && msg.contains("line 2"), "{msg}");

        let wrong_type = r#"{"role":"generator","N":3,"hidden_dim":8,"cells":[
            {"type":"e","op1":"conv3x3","op2":"conv3x3"},
            {"type":"r","op1":"conv4x4","op2":"conv3x3"},
            {"type":"d","op1":"nearest","op2":"nearest"}]}"#;
        let msg = ArchitectureSpec::from_json(wrong_type).unwrap_err().to_string();
        assert!(msg.contains("cell 1"), "{msg}");

        let bad_n = r#"{"role":"generator","N":4,"hidden_dim":8,"cells":[]}"#;
        assert!(ArchitectureSpec::from_json(bad_n).is_err());
        assert!(ArchitectureSpec::from_json("{").is_err());
    }

    proptest! {
        #[test]
        fn discretize_is_shift_and_monotone_invariant(
            alpha in prop::collection::vec(-3.0f64..3.0, 5),
            shift in -10.0f64..10.0,
        ) {
            let mut table = AlphaTable::zeros(Role::Generator, 3).unwrap();
            table.cells[1].alpha[0] = alpha.clone();
            let base = discretize(Role::Generator, 3, &table, 4).unwrap();

            table.cells[1].alpha[0] = alpha.iter().map(|v| v + shift).collect();
            prop_assert_eq!(&discretize(Role::Generator, 3, &table, 4).unwrap(), &base);

            table.cells[1].alpha[0] = alpha.iter().map(|v| v.exp()).collect();
            prop_assert_eq!(&discretize(Role::Generator, 3, &table, 4).unwrap(), &base);

            // hard one-hot at the softmax argmax agrees with discretize
            let beta = mixture_weights(&alpha);
            let hot = argmax_first(&beta);
            prop_assert_eq!(operation_set(CellType::Residual)[hot], base.cells[1].op1);
        }
    }
}
