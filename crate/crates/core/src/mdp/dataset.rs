use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::LatentLowRankMDP;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub x: usize,
    pub a: usize,
    pub x_next: usize,
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub policy: String,
    pub seed: u64,
    pub stream: u64,
}

/// Tuples `(x_h, a_h, x_{h+1})` for one level.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    level: usize,
    tuples: Vec<Transition>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    level: usize,
    x: usize,
    a: usize,
    x_next: usize,
}

impl TransitionDataset {
    pub fn new(level: usize, tuples: Vec<Transition>, provenance: Provenance) -> Self {
        Self {
            level,
            tuples,
            provenance,
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn tuples(&self) -> &[Transition] {
        &self.tuples
    }

    /// First `n` tuples (all of them if `n` exceeds the length).
    pub fn head(&self, n: usize) -> TransitionDataset {
        Self {
            level: self.level,
            tuples: self.tuples[..n.min(self.tuples.len())].to_vec(),
            provenance: self.provenance.clone(),
        }
    }

    /// Checks every id against the environment's level sizes.
    pub fn validate(&self, mdp: &LatentLowRankMDP) -> Result<()> {
        if self.level >= mdp.horizon() {
            return Err(Error::LevelMismatch {
                expected: mdp.horizon() - 1,
                found: self.level,
            });
        }
        let (nx, nn) = (mdp.num_states(self.level), mdp.num_states(self.level + 1));
        for t in &self.tuples {
            if t.x >= nx || t.a >= mdp.num_actions() || t.x_next >= nn {
                return Err(Error::ShapeMismatch(format!(
                    "tuple {t:?} out of range at level {}",
                    self.level
                )));
            }
        }
        Ok(())
    }

    /// CSV with header `level,x,a,x_next`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for t in &self.tuples {
            w.serialize(CsvRow {
                level: self.level,
                x: t.x,
                a: t.a,
                x_next: t.x_next,
            })?;
        }
        if self.tuples.is_empty() {
            w.write_record(["level", "x", "a", "x_next"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["level", "x", "a", "x_next"] {
            return Err(Error::Parse(format!(
                "unexpected dataset header {headers:?}"
            )));
        }
        let mut level = None;
        let mut tuples = Vec::new();
        for row in r.deserialize() {
            let row: CsvRow = row?;
            match level {
                None => level = Some(row.level),
                Some(l) if l != row.level => {
                    return Err(Error::LevelMismatch {
                        expected: l,
                        found: row.level,
                    })
                }
                _ => {}
            }
            tuples.push(Transition {
                x: row.x,
                a: row.a,
                x_next: row.x_next,
            });
        }
        let level = level.ok_or(Error::EmptyDataset)?;
        Ok(Self::new(level, tuples, Provenance::default()))
    }
}
