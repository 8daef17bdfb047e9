//! Plain-text checkpoints. Floats are written in shortest round-trip form, so a
//! save/load cycle is bit-exact.
//!
//! ```text
//! hwpd-checkpoint v1
//! spec_hash <sha256 of spec json>
//! spec <spec json>
//! meta <key>\t<value>        (zero or more, sorted by key)
//! blocks <n>
//! block <name> <d0>x<d1>...
//! <values separated by spaces>
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Model, ModelSpec, NnError};

const MAGIC: &str = "hwpd-checkpoint v1";

/// A model plus free-form metadata such as the normalization stats file and cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Self { model, metadata: BTreeMap::new() }
    }

    pub fn to_text(&self) -> String {
        let spec = self.model.spec();
        let mut out = format!("{MAGIC}\nspec_hash {}\nspec {}\n", spec.hash(), spec_json(spec));
        for (k, v) in &self.metadata {
            out.push_str(&format!("meta {k}\t{v}\n"));
        }
        let blocks = self.model.blocks();
        out.push_str(&format!("blocks {}\n", blocks.len()));
        for b in blocks {
            let shape: Vec<String> = b.shape.iter().map(|d| d.to_string()).collect();
            out.push_str(&format!("block {} {}\n", b.name, shape.join("x")));
            let vals: Vec<String> = b.values.iter().map(|v| v.to_string()).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses a checkpoint. With `expected`, the stored spec hash must match it.
    pub fn from_text(text: &str, expected: Option<&ModelSpec>) -> Result<Self, NnError> {
        let bad = |m: &str| NnError::MalformedCheckpoint(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing header"));
        }
        let hash = lines.next().and_then(|l| l.strip_prefix("spec_hash ")).ok_or_else(|| bad("missing spec_hash"))?;
        let spec_text = lines.next().and_then(|l| l.strip_prefix("spec ")).ok_or_else(|| bad("missing spec"))?;
        let spec: ModelSpec = serde_json::from_str(spec_text).map_err(|e| bad(&format!("spec: {e}")))?;
        if spec.hash() != hash {
            return Err(NnError::SpecMismatch { expected: hash.to_string(), found: spec.hash() });
        }
        if let Some(exp) = expected {
            if exp.hash() != hash {
                return Err(NnError::SpecMismatch { expected: exp.hash(), found: hash.to_string() });
            }
        }
        let mut metadata = BTreeMap::new();
        let mut line = lines.next().ok_or_else(|| bad("missing blocks"))?;
        while let Some(kv) = line.strip_prefix("meta ") {
            let (k, v) = kv.split_once('\t').ok_or_else(|| bad("meta line without tab"))?;
            metadata.insert(k.to_string(), v.to_string());
            line = lines.next().ok_or_else(|| bad("missing blocks"))?;
        }
        let count: usize = line
            .strip_prefix("blocks ")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad("missing block count"))?;

        let mut model = Model::zeroed(spec)?;
        let mut targets = model.blocks_mut();
        if targets.len() != count {
            return Err(bad(&format!("expected {} blocks, found {count}", targets.len())));
        }
        for block in targets.iter_mut() {
            let header = lines.next().and_then(|l| l.strip_prefix("block ")).ok_or_else(|| bad("missing block header"))?;
            let (name, shape) = header.split_once(' ').ok_or_else(|| bad("block header"))?;
            let shape: Vec<usize> =
                shape.split('x').map(|d| d.parse()).collect::<Result<_, _>>().map_err(|_| bad("block shape"))?;
            if name != block.name || shape != block.shape {
                return Err(NnError::SpecMismatch {
                    expected: format!("{} {:?}", block.name, block.shape),
                    found: format!("{name} {shape:?}"),
                });
            }
            let values: Vec<f64> = lines
                .next()
                .ok_or_else(|| bad("missing block values"))?
                .split_ascii_whitespace()
                .map(|v| v.parse())
                .collect::<Result<_, _>>()
                .map_err(|_| bad(&format!("values of {name}")))?;
            if values.len() != block.values.len() {
                return Err(bad(&format!("{name}: {} values, expected {}", values.len(), block.values.len())));
            }
            block.values = values;
        }
        drop(targets);
        Ok(Self { model, metadata })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path, expected: Option<&ModelSpec>) -> Result<Self, NnError> {
        Self::from_text(&fs::read_to_string(path)?, expected)
    }
}

fn spec_json(spec: &ModelSpec) -> String {
    serde_json::to_string(spec).expect("spec serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{CellKind, RecurrentSpec};

    #[test]
    fn round_trip_is_bit_exact() {
        let mut ck = Checkpoint::new(Model::new(ModelSpec::standard(17), 42).unwrap());
        ck.metadata.insert("normalization".into(), "stats.tsv".into());
        ck.metadata.insert("cutoff".into(), "300".into());
        let back = Checkpoint::from_text(&ck.to_text(), Some(&ModelSpec::standard(17))).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_text(), ck.to_text());
    }

    #[test]
    fn rejects_other_spec() {
        let text = Checkpoint::new(Model::new(ModelSpec::standard(17), 1).unwrap()).to_text();
        assert!(matches!(Checkpoint::from_text(&text, Some(&ModelSpec::standard(16))), Err(NnError::SpecMismatch { .. })));
        let tampered = text.replacen("\"input_features\":17", "\"input_features\":16", 1);
        assert!(matches!(Checkpoint::from_text(&tampered, None), Err(NnError::SpecMismatch { .. })));
    }

    #[test]
    fn rejects_truncated_values() {
        let spec = ModelSpec {
            input_features: 1,
            conv_layers: vec![],
            recurrent_layers: vec![RecurrentSpec::new(CellKind::Rnn, 1, false)],
        };
        let text = Checkpoint::new(Model::new(spec, 0).unwrap()).to_text();
        let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(matches!(Checkpoint::from_text(&cut, None), Err(NnError::MalformedCheckpoint(_))));
    }
}
